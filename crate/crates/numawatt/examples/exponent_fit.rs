//! CPU power does not always scale linearly with utilization; the credit
//! exponent gamma captures the curvature. This fits gamma from a measured
//! (utilization, power) sweep by least squares.
//!
//! Run with: cargo run --example exponent_fit

use numawatt::commands::cmd_fit;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let sweep = dir.path().join("sweep.csv");

    // A synthetic platform: 35 W static floor, 60 W swing, gamma = 0.8.
    let mut text = String::from("# utilization,power_w\n");
    for k in 0..=25 {
        let u = k as f64 / 25.0;
        text.push_str(&format!("{u},{}\n", 35.0 + 60.0 * u.powf(0.8)));
    }
    std::fs::write(&sweep, text)?;

    let mut out = std::io::stdout().lock();
    let fit = cmd_fit(&sweep, &mut out)?;
    assert!((fit.gamma - 0.8).abs() < 1e-3);
    Ok(())
}
