//! Energy counters are cumulative and wrap at a platform-specific range;
//! this walks a counter through several wraps and shows the reconstructed
//! total matching the true accumulation exactly.
//!
//! Run with: cargo run --example overflow_reconstruction

use numawatt::telemetry::delta_uj_with_overflow;

fn main() -> anyhow::Result<()> {
    let max_range: u64 = 1_000_000; // a tiny range so wraps are frequent
    let accruals = [300_000u64, 450_000, 500_000, 120_000, 980_000, 700_000];

    let mut counter = 875_000 % max_range; // arbitrary starting phase
    let mut prev = counter;
    let mut truth = 0u64;
    let mut recovered = 0u64;
    println!("{:>10} {:>10} {:>10} {:>12}", "accrual", "counter", "delta", "recovered");
    for accrual in accruals {
        truth += accrual;
        counter = (counter + accrual) % max_range;
        let delta = delta_uj_with_overflow(prev, counter, max_range)?;
        recovered += delta;
        let wrapped = if counter < prev { " (wrapped)" } else { "" };
        println!("{accrual:>10} {counter:>10} {delta:>10} {recovered:>12}{wrapped}");
        prev = counter;
    }
    assert_eq!(truth, recovered);
    println!("true total {truth} uJ == reconstructed {recovered} uJ");
    Ok(())
}
