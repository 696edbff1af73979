//! Fuzzed invariants over the pure layers: overflow reconstruction,
//! residence normalization, credit bounds and parser round-trips.

use proptest::prelude::*;

use numawatt::model::{
    cpu_credit, cpu_residence, expected_cpu_time, expected_mem, mem_credit, mem_residence,
    CpuSeconds, MemBytes, SocketId,
};
use numawatt::telemetry::delta_uj_with_overflow;
use numawatt::telemetry::stat::{format_stat_line, parse_task_stat};

proptest! {
    /// Any delta smaller than the counter range survives the wrap.
    #[test]
    fn overflow_roundtrip(
        max in 1u64..=u64::MAX / 2,
        prev_seed in any::<u64>(),
        delta_seed in any::<u64>(),
    ) {
        let prev = prev_seed % max;
        let delta = delta_seed % max;
        let curr = (prev + delta) % max;
        prop_assert_eq!(delta_uj_with_overflow(prev, curr, max).unwrap(), delta);
    }

    /// Out-of-range readings are rejected, never silently wrapped.
    #[test]
    fn overflow_rejects_out_of_range(max in 1u64..1_000_000, excess in 1u64..1000) {
        prop_assert!(delta_uj_with_overflow(max + excess, 0, max).is_err());
        prop_assert!(delta_uj_with_overflow(0, max + excess, max).is_err());
    }

    /// CPU residence vectors are distributions whenever anything was placed.
    #[test]
    fn cpu_residence_normalizes(
        sockets in 1usize..8,
        placements in prop::collection::vec(prop::option::of(0usize..8), 0..30),
    ) {
        let samples: Vec<(f64, Option<SocketId>)> = placements
            .iter()
            .enumerate()
            .map(|(i, p)| (i as f64, p.map(|s| SocketId(s % sockets))))
            .collect();
        let rates = cpu_residence(&samples, sockets);
        prop_assert_eq!(rates.len(), sockets);
        prop_assert!(rates.iter().all(|&r| (0.0..=1.0).contains(&r)));
        let sum: f64 = rates.iter().sum();
        if samples.iter().any(|(_, p)| p.is_some()) {
            prop_assert!((sum - 1.0).abs() <= 1e-9, "sum {}", sum);
        } else {
            prop_assert_eq!(sum, 0.0);
        }
    }

    /// Memory residence vectors are distributions whenever bytes exist.
    #[test]
    fn mem_residence_normalizes(
        sockets in 1usize..8,
        samples in prop::collection::vec(
            prop::collection::vec(0u64..1_000_000, 8),
            0..6,
        ),
    ) {
        let samples: Vec<Vec<MemBytes>> = samples
            .iter()
            .map(|s| s.iter().take(sockets).copied().map(MemBytes).collect())
            .collect();
        let rates = mem_residence(&samples, sockets);
        prop_assert!(rates.iter().all(|&r| (0.0..=1.0).contains(&r)));
        let sum: f64 = rates.iter().sum();
        if samples.iter().any(|s| s.iter().any(|b| b.0 > 0)) {
            prop_assert!((sum - 1.0).abs() <= 1e-9, "sum {}", sum);
        } else {
            prop_assert_eq!(sum, 0.0);
        }
    }

    /// Credits always land in [0, 1] and never exceed the usage share.
    #[test]
    fn credits_are_bounded(
        t_app in 0.0f64..100.0,
        t_total in 0.0f64..100.0,
        gamma in 0.01f64..=1.0,
    ) {
        let out = cpu_credit(CpuSeconds(t_app), CpuSeconds(t_total), gamma);
        prop_assert!((0.0..=1.0).contains(&out.credit.0));
        let mem = mem_credit(t_app, t_total, gamma);
        prop_assert!((0.0..=1.0).contains(&mem.credit.0));
        if t_total > 0.0 && t_app <= t_total {
            // Concave exponent never under-credits relative to the raw share.
            prop_assert!(out.credit.0 >= (t_app / t_total) - 1e-12);
            prop_assert!(!out.ratio_clamped);
        }
    }

    /// Expected usage never exceeds the summed inputs (mass conservation).
    #[test]
    fn expected_usage_conserves_mass(
        sockets in 1usize..6,
        tasks in prop::collection::vec((0usize..6, 0.0f64..10.0), 0..10),
    ) {
        let with_rates: Vec<(Vec<f64>, CpuSeconds)> = tasks
            .iter()
            .map(|&(s, t)| {
                let mut rates = vec![0.0; sockets];
                rates[s % sockets] = 1.0;
                (rates, CpuSeconds(t))
            })
            .collect();
        let borrowed: Vec<(&[f64], CpuSeconds)> =
            with_rates.iter().map(|(r, t)| (r.as_slice(), *t)).collect();
        let per_socket = expected_cpu_time(&borrowed, sockets);
        let total_in: f64 = tasks.iter().map(|&(_, t)| t).sum();
        let total_out: f64 = per_socket.iter().map(|t| t.0).sum();
        prop_assert!((total_in - total_out).abs() <= 1e-9 * total_in.max(1.0));

        let mem_tasks: Vec<(Vec<f64>, MemBytes)> = tasks
            .iter()
            .map(|&(s, t)| {
                let mut rates = vec![0.0; sockets];
                rates[s % sockets] = 1.0;
                (rates, MemBytes((t * 1e6) as u64))
            })
            .collect();
        let borrowed: Vec<(&[f64], MemBytes)> =
            mem_tasks.iter().map(|(r, m)| (r.as_slice(), *m)).collect();
        let per_socket = expected_mem(&borrowed, sockets);
        let mem_in: f64 = mem_tasks.iter().map(|(_, m)| m.0 as f64).sum();
        let mem_out: f64 = per_socket.iter().sum();
        prop_assert!((mem_in - mem_out).abs() <= 1e-6 * mem_in.max(1.0));
    }

    /// Stat lines round-trip through the formatter and parser for any
    /// process name, including parentheses, spaces and digits.
    #[test]
    fn stat_line_roundtrip(
        pid in 1i32..4_194_304,
        comm in "[ -~]{1,16}",
        ppid in 0i32..4_194_304,
        utime in any::<u32>(),
        stime in any::<u32>(),
        cpu in 0u32..1024,
    ) {
        // Newlines cannot appear in comm; the generator above is printable
        // ASCII which already excludes them.
        let line = format_stat_line(pid, &comm, 'R', ppid, utime as u64, stime as u64, cpu);
        let parsed = parse_task_stat(&line, "prop").unwrap();
        prop_assert_eq!(parsed.pid, pid);
        prop_assert_eq!(parsed.comm, comm);
        prop_assert_eq!(parsed.ppid, ppid);
        prop_assert_eq!(parsed.utime_ticks, utime as u64);
        prop_assert_eq!(parsed.stime_ticks, stime as u64);
        prop_assert_eq!(parsed.processor, cpu);
    }
}
