//! Reconstruction of energy deltas from wrapping RAPL counters.

use crate::error::{Error, Result};
use crate::model::EnergyJoules;

pub const MICROJOULE: f64 = 1e-6;

/// Delta between two readings of a wrapping microjoule counter.
///
/// A counter that moved backwards is assumed to have wrapped exactly once;
/// per-interval growth above `max_range` is undetectable and must be ruled
/// out by the sampling period (wrap periods are minutes at server power
/// levels, versus a 10 ms default period).
pub fn delta_uj_with_overflow(prev_uj: u64, curr_uj: u64, max_range_uj: u64) -> Result<u64> {
    if max_range_uj == 0 {
        return Err(Error::InvalidArgument(
            "counter max range must be positive".into(),
        ));
    }
    if prev_uj > max_range_uj || curr_uj > max_range_uj {
        return Err(Error::InvalidArgument(format!(
            "counter value exceeds max range {max_range_uj} uJ (prev={prev_uj}, curr={curr_uj})"
        )));
    }
    Ok(if curr_uj >= prev_uj {
        curr_uj - prev_uj
    } else {
        (max_range_uj - prev_uj) + curr_uj
    })
}

/// Same reconstruction, converted to joules.
pub fn delta_with_overflow(prev_uj: u64, curr_uj: u64, max_range_uj: u64) -> Result<EnergyJoules> {
    delta_uj_with_overflow(prev_uj, curr_uj, max_range_uj)
        .map(|uj| EnergyJoules(uj as f64 * MICROJOULE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_reconstruction() {
        // Single wrap: (1000 - 900) + 100 = 200 uJ.
        assert!((delta_with_overflow(900, 100, 1000).unwrap().0 - 2e-4).abs() < 1e-18);
        // No wrap.
        assert!((delta_with_overflow(100, 900, 1000).unwrap().0 - 8e-4).abs() < 1e-18);
        // Identity.
        assert_eq!(delta_with_overflow(42, 42, 1000).unwrap().0, 0.0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(delta_with_overflow(1001, 0, 1000).is_err());
        assert!(delta_with_overflow(0, 1001, 1000).is_err());
        assert!(delta_with_overflow(0, 0, 0).is_err());
    }

    #[test]
    fn random_walk_recovers_total() {
        // Sum of reconstructed deltas over a wrapped walk equals true growth.
        let max = 10_007u64;
        let mut truth = 0u64;
        let mut prev = 123u64;
        let mut recovered = 0u64;
        let mut x: u64 = 0x2545f491;
        for _ in 0..10_000 {
            // xorshift; per-step growth stays far below max.
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let step = x % 997;
            truth += step;
            let curr = (prev + step) % max;
            recovered += delta_uj_with_overflow(prev, curr, max).unwrap();
            prev = curr;
        }
        assert_eq!(truth, recovered);
    }
}
