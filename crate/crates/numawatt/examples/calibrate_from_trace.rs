//! Static powers are calibrated by sampling a quiesced host; on a synthetic
//! idle trace the procedure must recover the configured powers exactly.
//!
//! Run with: cargo run --example calibrate_from_trace

use numawatt::commands::{cmd_calibrate, CalibrateOptions};
use numawatt::oracle::{self, generate_trace};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;

    // An idle host: static draw only, no tasks.
    let mut scenario = oracle::preset("mix")?;
    scenario.name = "idle".into();
    scenario.duration = 5.0;
    scenario.tasks.clear();
    let trace = dir.path().join("idle.trace.jsonl");
    generate_trace(&scenario, &trace, None)?;

    let mut out = std::io::stdout().lock();
    let result = cmd_calibrate(
        &CalibrateOptions {
            seconds: 5.0,
            out: dir.path().join("calib.json"),
            trace: Some(trace),
            period: 0.01,
        },
        &mut out,
    )?;

    for s in 0..2 {
        assert!((result.package_w[s] - scenario.static_package_w[s]).abs() < 1e-6);
        assert!((result.dram_w[s] - scenario.static_dram_w[s]).abs() < 1e-6);
    }
    println!("recovered the configured static powers exactly");
    Ok(())
}
