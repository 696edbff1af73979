//! Generates a synthetic multi-tenant scenario with exact ground truth,
//! replays it through the attribution engine, and checks both closure
//! (shares sum back to the measurement) and per-task agreement.
//!
//! Run with: cargo run --example simulate_and_validate

use numawatt::commands::{cmd_simulate, cmd_validate, SimulateOptions, ValidateOptions};
use numawatt::oracle;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;

    // Shorten the stock preset so the example runs in about a second.
    let mut scenario = oracle::preset("mix")?;
    scenario.duration = 10.0;
    let scenario_path = dir.path().join("mix.json");
    std::fs::write(&scenario_path, serde_json::to_string_pretty(&scenario)?)?;

    let mut out = std::io::stdout().lock();
    let sim = cmd_simulate(
        &SimulateOptions {
            preset: None,
            scenario: Some(scenario_path),
            seed: 1,
            out_dir: dir.path().join("out"),
        },
        &mut out,
    )?;

    let outcome = cmd_validate(&ValidateOptions::new(sim.trace, sim.truth), &mut out)?;
    assert!(outcome.passed);
    Ok(())
}
