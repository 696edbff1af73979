//! Demonstrates noisy-neighbor robustness: the same target workload is
//! attributed once alone and once beside an equal-load neighbor. The
//! usage-share baseline swings by more than 40%; the credit-based
//! attribution does not move.
//!
//! Run with: cargo run --example noisy_neighbor

use numawatt::engine::{run_attribution, EngineConfig, StaticPowers, Targets};
use numawatt::model::{ModelParams, StaticMode};
use numawatt::oracle::{self, generate_trace, GroundTruth};
use numawatt::telemetry::trace::ReplaySource;

struct Totals {
    fine_cpu: f64,
    fine_dram: f64,
    coarse_cpu: f64,
}

fn target_totals(name: &str, dir: &std::path::Path) -> anyhow::Result<Totals> {
    let mut scenario = oracle::preset(name)?;
    scenario.duration = 10.0;
    let trace = dir.join(format!("{name}.trace.jsonl"));
    let truth_path = dir.join(format!("{name}.truth.jsonl"));
    generate_trace(&scenario, &trace, Some(&truth_path))?;
    let truth = GroundTruth::load(&truth_path)?;
    let target = truth.header.labels["target"].to_string();

    let mut source = ReplaySource::open(&trace)?;
    let config = EngineConfig {
        params: ModelParams::default(),
        targets: Targets::AllJobs,
        static_mode: StaticMode::Apportioned,
        pin_self: false,
        static_powers: Some(StaticPowers {
            package_w: truth.header.static_package_w.clone(),
            dram_w: truth.header.static_dram_w.clone(),
        }),
        self_pid: None,
    };
    let mut totals = Totals { fine_cpu: 0.0, fine_dram: 0.0, coarse_cpu: 0.0 };
    run_attribution(&config, &mut source, &mut |r| {
        if r.app_id == target {
            for s in &r.per_socket {
                totals.fine_cpu += s.cpu.dynamic_attributed().0;
                totals.fine_dram += s.dram.dynamic_attributed().0;
            }
            totals.coarse_cpu += r.coarse_cpu.0;
        }
        Ok(())
    })?;
    Ok(totals)
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let alone = target_totals("mix", dir.path())?;
    let both = target_totals("mix-neighbor", dir.path())?;

    println!(
        "target, alone:       cpu {:>8.3} J  dram {:>7.3} J  (cpu usage share {:>8.3} J)",
        alone.fine_cpu, alone.fine_dram, alone.coarse_cpu
    );
    println!(
        "target, collocated:  cpu {:>8.3} J  dram {:>7.3} J  (cpu usage share {:>8.3} J)",
        both.fine_cpu, both.fine_dram, both.coarse_cpu
    );
    let fine_shift = ((alone.fine_cpu + alone.fine_dram) - (both.fine_cpu + both.fine_dram)).abs()
        / (alone.fine_cpu + alone.fine_dram);
    let coarse_shift = (alone.coarse_cpu - both.coarse_cpu).abs() / alone.coarse_cpu;
    println!("fine attribution moved by      {:>6.3} %", fine_shift * 100.0);
    println!("cpu usage share moved by       {:>6.3} %", coarse_shift * 100.0);
    assert!(fine_shift <= 1e-6);
    assert!(coarse_shift >= 0.40);
    Ok(())
}
