//! Acceptance gate: one test per shipping criterion, each with pinned
//! tolerances and a single PASS line on success.

use std::io::Cursor;
use std::time::Instant;

use numawatt::commands::{cmd_replay, cmd_report, ReplayOptions, ReportOptions};
use numawatt::db::{GroupBy, ReportFormat};
use numawatt::engine::{
    run_attribution, AttributionRecord, EngineConfig, StaticPowers, Targets,
};
use numawatt::model::{ModelParams, SocketId, StaticMode};
use numawatt::oracle::{
    self, generate_trace, ground_truth_compare, CpuStep, GroundTruth, Scenario, TaskKind,
    TaskSpec,
};
use numawatt::telemetry::trace::ReplaySource;
use numawatt::telemetry::{
    delta_uj_with_overflow, RaplDomain, RaplReading, TaskCpuReading, TelemetryFrame, Topology,
    TraceWriter,
};
use numawatt::validate::validate_by_summation;

fn pass(number: u32, name: &str) {
    println!("acceptance {number} ({name}): PASS");
}

/// Replays a generated trace in all-jobs mode with the truth file's static
/// powers, collecting every record.
fn replay_all_jobs(
    trace: &std::path::Path,
    truth: &GroundTruth,
    gamma: f64,
    sigma: f64,
    static_mode: StaticMode,
) -> Vec<AttributionRecord> {
    let mut source = ReplaySource::open(trace).unwrap();
    let config = EngineConfig {
        params: ModelParams {
            gamma,
            sigma,
            ..ModelParams::default()
        },
        targets: Targets::AllJobs,
        static_mode,
        pin_self: false,
        static_powers: Some(StaticPowers {
            package_w: truth.header.static_package_w.clone(),
            dram_w: truth.header.static_dram_w.clone(),
        }),
        self_pid: None,
    };
    let mut records = Vec::new();
    run_attribution(&config, &mut source, &mut |r| {
        records.push(r.clone());
        Ok(())
    })
    .unwrap();
    records
}

fn generate_preset(name: &str, dir: &std::path::Path) -> (std::path::PathBuf, GroundTruth) {
    let scenario = oracle::preset(name).unwrap();
    let trace = dir.join(format!("{name}.trace.jsonl"));
    let truth_path = dir.join(format!("{name}.truth.jsonl"));
    generate_trace(&scenario, &trace, Some(&truth_path)).unwrap();
    (trace, GroundTruth::load(&truth_path).unwrap())
}

/// Criterion 1: the hand-built two-frame dual-socket worked example. One
/// application runs a thread per socket (30 of 100 busy seconds on socket 0,
/// 180 of 200 on socket 1; package deltas 30 J and 50 J). Fine-grained
/// attribution must give 54 J; the socket-blind baseline gives 56 J.
#[test]
fn worked_example_two_sockets() {
    let start = Instant::now();
    let topology = Topology {
        sockets: 2,
        cpu_map: vec![0, 1],
        clk_tck: 1,
    };
    let rapl = |uj0: u64, uj1: u64| {
        vec![
            RaplReading {
                socket: SocketId(0),
                domain: RaplDomain::Package,
                uj: uj0,
                max_uj: 262_143_328_850,
            },
            RaplReading {
                socket: SocketId(1),
                domain: RaplDomain::Package,
                uj: uj1,
                max_uj: 262_143_328_850,
            },
        ]
    };
    let task = |tid: i32, utime: u64, cpu: u32| TaskCpuReading {
        pid: 10,
        tid,
        ppid: Some(1),
        utime,
        stime: 0,
        cpu,
        state: 'R',
    };
    let mut bytes = Vec::new();
    {
        let mut w = TraceWriter::new(&mut bytes, &topology).unwrap();
        w.write_frame(&TelemetryFrame {
            ts: 0.0,
            rapl: rapl(0, 0),
            host_ticks: vec![0, 0],
            tasks: vec![task(10, 0, 0), task(11, 0, 1)],
            numa: vec![],
            per_cpu_ticks: None,
        })
        .unwrap();
        w.write_frame(&TelemetryFrame {
            ts: 1.0,
            rapl: rapl(30_000_000, 50_000_000),
            host_ticks: vec![100, 200],
            tasks: vec![task(10, 30, 0), task(11, 180, 1)],
            numa: vec![],
            per_cpu_ticks: None,
        })
        .unwrap();
        w.finish().unwrap();
    }
    let mut source = ReplaySource::new(Cursor::new(bytes)).unwrap();
    let config = EngineConfig::new(Targets::Pids(vec![10]));
    let mut records = Vec::new();
    run_attribution(&config, &mut source, &mut |r| {
        records.push(r.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert!(
        (r.cpu_total.0 - 54.0).abs() <= 1e-9,
        "fine-grained: {}",
        r.cpu_total.0
    );
    assert!(
        (r.coarse_cpu.0 - 56.0).abs() <= 1e-9,
        "coarse baseline: {}",
        r.coarse_cpu.0
    );
    assert!(start.elapsed().as_secs_f64() < 1.0);
    pass(1, "two-socket worked example: fine 54 J vs coarse 56 J");
}

/// Criterion 2: validation by summation on the three linear presets —
/// per-interval relative closure error <= 1e-6 and whole-run closure
/// <= 1e-9, with apportioned static and unit exponents. The ~4.52% margin
/// observed on real hardware is not desk-reproducible; exactness of the
/// synthetic closure substitutes for it.
#[test]
fn closure_on_linear_presets() {
    let dir = tempfile::tempdir().unwrap();
    for preset in ["cpu-sweep", "mem-sweep", "mix"] {
        let start = Instant::now();
        let (trace, truth) = generate_preset(preset, dir.path());
        let records = replay_all_jobs(&trace, &truth, 1.0, 1.0, StaticMode::Apportioned);
        let closure = validate_by_summation(&records, 1e-6);
        assert_eq!(
            closure.incomplete_intervals, 0,
            "{preset}: {} intervals over tolerance (max rel {:.3e})",
            closure.incomplete_intervals, closure.max_interval_rel_err
        );
        assert!(
            closure.max_interval_rel_err <= 1e-6,
            "{preset}: max interval rel err {:.3e}",
            closure.max_interval_rel_err
        );
        assert!(
            closure.run_rel_err_cpu() <= 1e-9 && closure.run_rel_err_dram() <= 1e-9,
            "{preset}: run closure cpu {:.3e} dram {:.3e}",
            closure.run_rel_err_cpu(),
            closure.run_rel_err_dram()
        );
        assert!(start.elapsed().as_secs_f64() < 30.0, "{preset} too slow");
    }
    pass(2, "summation closure <= 1e-6/interval, <= 1e-9/run on 3 presets");
}

/// Criterion 3: noisy-neighbor robustness. The same target workload runs
/// alone and beside an equal-load neighbor. Its attributed dynamic energy
/// must be identical to <= 1e-6 relative, its per-socket credit exactly
/// halves, and the coarse usage-share baseline swings by >= 40%.
#[test]
fn noisy_neighbor_robustness() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (alone_trace, alone_truth) = generate_preset("mix", dir.path());
    let (both_trace, both_truth) = generate_preset("mix-neighbor", dir.path());
    let alone = replay_all_jobs(&alone_trace, &alone_truth, 1.0, 1.0, StaticMode::Apportioned);
    let both = replay_all_jobs(&both_trace, &both_truth, 1.0, 1.0, StaticMode::Apportioned);

    let target_pid = alone_truth.header.labels["target"].to_string();
    assert_eq!(target_pid, both_truth.header.labels["target"].to_string());
    let pick = |records: &[AttributionRecord]| -> Vec<AttributionRecord> {
        records
            .iter()
            .filter(|r| r.app_id == target_pid)
            .cloned()
            .collect()
    };
    let alone_t = pick(&alone);
    let both_t = pick(&both);
    assert_eq!(alone_t.len(), both_t.len());

    let mut dyn_alone = 0.0;
    let mut dyn_both = 0.0;
    let mut coarse_alone = 0.0;
    let mut coarse_both = 0.0;
    for (a, b) in alone_t.iter().zip(&both_t) {
        for (sa, sb) in a.per_socket.iter().zip(&b.per_socket) {
            dyn_alone += sa.cpu.dynamic_attributed().0 + sa.dram.dynamic_attributed().0;
            dyn_both += sb.cpu.dynamic_attributed().0 + sb.dram.dynamic_attributed().0;
            // The equal-load neighbor exactly halves the target's CPU load
            // share; its memory footprint is unchanged, so the DRAM credit
            // must not move at all.
            assert_eq!(
                sb.cpu.credit.0,
                sa.cpu.credit.0 / 2.0,
                "cpu credit at t={}",
                a.t_start
            );
            assert_eq!(sb.dram.credit.0, sa.dram.credit.0);
        }
        coarse_alone += a.coarse_cpu.0;
        coarse_both += b.coarse_cpu.0;
    }
    let dyn_shift = (dyn_alone - dyn_both).abs() / dyn_alone;
    assert!(dyn_shift <= 1e-6, "dynamic attribution moved by {dyn_shift:.3e}");
    let coarse_shift = (coarse_alone - coarse_both).abs() / coarse_alone;
    assert!(
        coarse_shift >= 0.40,
        "coarse baseline moved only {:.1}%",
        coarse_shift * 100.0
    );
    assert!(start.elapsed().as_secs_f64() < 60.0);
    pass(3, "neighbor leaves fine attribution fixed, halves credit, coarse swings >= 40%");
}

/// Criterion 4: per-task per-interval attributed dynamic energy matches the
/// generator's ground truth to <= 1e-6 relative on linear scenarios with
/// full coverage — fine-grained validation that no real system allows.
#[test]
fn fine_grained_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    for preset in ["cpu-sweep", "mem-sweep", "mix-neighbor"] {
        let start = Instant::now();
        let (trace, truth) = generate_preset(preset, dir.path());
        let records = replay_all_jobs(&trace, &truth, 1.0, 1.0, StaticMode::Apportioned);
        let report = ground_truth_compare(&records, &truth).unwrap();
        assert!(report.rows > 0);
        assert!(
            report.max_rel_err <= 1e-6,
            "{preset}: max per-task rel err {:.3e} over {} checks",
            report.max_rel_err,
            report.rows
        );
        assert!(start.elapsed().as_secs_f64() < 30.0, "{preset} too slow");
    }
    pass(4, "per-task dynamic energy within 1e-6 of ground truth");
}

/// Criterion 5: 1000 randomized wrap scenarios — the reconstructed
/// cumulative energy equals the generator's truth exactly.
#[test]
fn overflow_reconstruction_property() {
    let start = Instant::now();
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    for case in 0..1000 {
        let max = 1 + next() % 1_000_000_000;
        let steps = 5 + (next() % 50) as usize;
        let mut true_total = 0u64;
        let mut counter = next() % max;
        let mut prev = counter;
        let mut recovered = 0u64;
        for _ in 0..steps {
            // Per-step accrual strictly below the range keeps wraps
            // unambiguous, matching the physical sampling constraint.
            let accrual = next() % max;
            true_total += accrual;
            counter = (counter + accrual) % max;
            recovered += delta_uj_with_overflow(prev, counter, max).unwrap();
            prev = counter;
        }
        assert_eq!(recovered, true_total, "case {case} (max {max})");
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
    pass(5, "1000 randomized counter wraps reconstructed exactly");
}

/// Criterion 6: residence vectors sum to 1 +- 1e-9 whenever observations
/// exist. (The full fuzzed property suite lives in tests/properties.rs;
/// this gate re-checks the invariant over a scripted sweep.)
#[test]
fn residence_normalization() {
    use numawatt::model::{cpu_residence, mem_residence, MemBytes};
    let start = Instant::now();
    let mut state = 0xdeadbeefcafef00du64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    for _ in 0..2000 {
        let sockets = 1 + (next() % 8) as usize;
        let n = (next() % 20) as usize;
        let samples: Vec<(f64, Option<SocketId>)> = (0..n)
            .map(|i| {
                let placed = next() % 4 != 0;
                (
                    i as f64,
                    placed.then(|| SocketId((next() % sockets as u64) as usize)),
                )
            })
            .collect();
        let rates = cpu_residence(&samples, sockets);
        let sum: f64 = rates.iter().sum();
        if samples.iter().any(|(_, p)| p.is_some()) {
            assert!((sum - 1.0).abs() <= 1e-9, "cpu sum {sum}");
        } else {
            assert_eq!(sum, 0.0);
        }

        let mem_samples: Vec<Vec<MemBytes>> = (0..(next() % 5))
            .map(|_| {
                (0..sockets)
                    .map(|_| MemBytes(next() % 1_000_000))
                    .collect()
            })
            .collect();
        let rates = mem_residence(&mem_samples, sockets);
        let sum: f64 = rates.iter().sum();
        if mem_samples.iter().any(|s| s.iter().any(|b| b.0 > 0)) {
            assert!((sum - 1.0).abs() <= 1e-9, "mem sum {sum}");
        } else {
            assert_eq!(sum, 0.0);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
    pass(6, "residence vectors normalize to 1 +- 1e-9");
}

/// Criterion 7: replay plus report of the same trace twice produce
/// byte-identical record files and exports.
#[test]
fn determinism_byte_identical() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = oracle::preset("mix").unwrap();
    scenario.duration = 5.0;
    let trace = dir.path().join("t.jsonl");
    generate_trace(&scenario, &trace, None).unwrap();

    let run = |run_id: &str, db: &std::path::Path| {
        let opts = ReplayOptions {
            trace: trace.clone(),
            params: ModelParams::default(),
            targets: Targets::AllJobs,
            static_mode: StaticMode::Apportioned,
            calib: None,
            db: db.to_path_buf(),
            run_id: Some(run_id.to_string()),
        };
        cmd_replay(&opts, &mut Vec::new()).unwrap();
        let mut export = Vec::new();
        cmd_report(
            &ReportOptions {
                db: db.to_path_buf(),
                run_id: Some(run_id.to_string()),
                format: ReportFormat::Csv,
                group_by: GroupBy::Interval,
                out: None,
            },
            &mut export,
        )
        .unwrap();
        let records = std::fs::read(db.join(run_id).join("records.jsonl")).unwrap();
        (records, export)
    };
    // Same run id in two separate databases: everything must match.
    let (rec_a, exp_a) = run("r", &dir.path().join("db-a"));
    let (rec_b, exp_b) = run("r", &dir.path().join("db-b"));
    assert_eq!(rec_a, rec_b, "record files differ");
    assert_eq!(exp_a, exp_b, "exports differ");
    assert!(!rec_a.is_empty());
    assert!(start.elapsed().as_secs_f64() < 10.0);
    pass(7, "replay + report twice is byte-identical");
}

/// Criterion 8: reactive task tracking. A thread dies mid-run: records
/// before its death include its share, records after exclude it, and
/// closure holds throughout.
#[test]
fn reactive_task_death() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = oracle::preset("mix").unwrap();
    scenario.name = "death".into();
    scenario.duration = 1.0;
    scenario.tasks = vec![
        TaskSpec {
            label: "mortal".into(),
            kind: TaskKind::Process,
            start: 0.0,
            end: f64::INFINITY,
            cpu: vec![],
            mem: vec![],
        },
        // The worker thread exits at t = 0.3.
        TaskSpec {
            label: "mortal.t".into(),
            kind: TaskKind::ThreadOf("mortal".into()),
            start: 0.0,
            end: 0.3,
            cpu: vec![CpuStep {
                t: 0.0,
                per_socket: vec![0.5, 0.0],
            }],
            mem: vec![],
        },
        TaskSpec {
            label: "survivor".into(),
            kind: TaskKind::Process,
            start: 0.0,
            end: f64::INFINITY,
            cpu: vec![CpuStep {
                t: 0.0,
                per_socket: vec![0.25, 0.25],
            }],
            mem: vec![],
        },
    ];
    let trace = dir.path().join("death.trace.jsonl");
    let truth_path = dir.path().join("death.truth.jsonl");
    generate_trace(&scenario, &trace, Some(&truth_path)).unwrap();
    let truth = GroundTruth::load(&truth_path).unwrap();
    let records = replay_all_jobs(&trace, &truth, 1.0, 1.0, StaticMode::Apportioned);

    let mortal = truth.header.labels["mortal"].to_string();
    let before: Vec<&AttributionRecord> = records
        .iter()
        .filter(|r| r.app_id == mortal && r.t_end <= 0.30 + 1e-9)
        .collect();
    let after: Vec<&AttributionRecord> = records
        .iter()
        .filter(|r| r.app_id == mortal && r.t_start >= 0.30 - 1e-9)
        .collect();
    assert!(!before.is_empty());
    let dyn_of = |r: &AttributionRecord| -> f64 {
        r.per_socket
            .iter()
            .map(|s| s.cpu.dynamic_attributed().0)
            .sum()
    };
    assert!(
        before.iter().all(|r| dyn_of(r) > 0.0),
        "mortal had no share before its death"
    );
    // The parent process lives on after its worker thread exits, so records
    // keep coming — with exactly zero dynamic share.
    assert!(!after.is_empty());
    assert!(
        after.iter().all(|r| dyn_of(r) == 0.0),
        "mortal still carries a share after its thread died"
    );
    let closure = validate_by_summation(&records, 1e-6);
    assert_eq!(closure.incomplete_intervals, 0);
    assert!(closure.max_interval_rel_err <= 1e-6);
    assert!(start.elapsed().as_secs_f64() < 5.0);
    pass(8, "mid-run thread death tracked, closure intact");
}

/// Criterion 9: a 1-hour-equivalent replay (360 000 frames, 20 tasks)
/// finishes within 60 s. Live-overhead percentages from instrumented
/// hardware are not desk-reproducible; this processing bound substitutes.
#[test]
fn throughput_hour_equivalent() {
    let dir = tempfile::tempdir().unwrap();
    let mut tasks = Vec::new();
    for i in 0..20 {
        let mut per_socket = vec![0.0, 0.0];
        per_socket[i % 2] = 0.05;
        tasks.push(TaskSpec {
            label: format!("p{i}"),
            kind: TaskKind::Process,
            start: 0.0,
            end: f64::INFINITY,
            cpu: vec![CpuStep { t: 0.0, per_socket }],
            mem: vec![],
        });
    }
    let scenario = Scenario {
        name: "hour".into(),
        duration: 3600.0,
        tasks,
        ..oracle::preset("mix").unwrap()
    };
    let trace = dir.path().join("hour.trace.jsonl");
    generate_trace(&scenario, &trace, None).unwrap();

    let start = Instant::now();
    let mut source = ReplaySource::open(&trace).unwrap();
    let config = EngineConfig {
        params: ModelParams::default(),
        targets: Targets::AllJobs,
        static_mode: StaticMode::Apportioned,
        pin_self: false,
        static_powers: Some(StaticPowers {
            package_w: scenario.static_package_w.clone(),
            dram_w: scenario.static_dram_w.clone(),
        }),
        self_pid: None,
    };
    let mut n = 0usize;
    let summary = run_attribution(&config, &mut source, &mut |_| {
        n += 1;
        Ok(())
    })
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(summary.frames, 360_001);
    assert_eq!(n, 360_000 * 20);
    assert!(elapsed <= 60.0, "replay took {elapsed:.1} s");
    pass(9, "360k-frame 20-task replay within 60 s");
}

/// Criterion 10: stat-line fuzz corpus with parenthesis/space process names
/// — zero misparses against the split-at-last-parenthesis oracle.
#[test]
fn stat_parser_robustness() {
    use numawatt::telemetry::stat::{format_stat_line, parse_task_stat};
    let start = Instant::now();
    let comms = [
        "simple",
        "with space",
        "(paren)",
        "))((",
        "a (b) c",
        "(a b) c",
        "tricky) 5 (x",
        ") R 1",
        "((((",
        "end)",
        "(start",
        "s p a c e s",
    ];
    let mut cases = 0;
    let mut state = 0x1234_5678_9abc_def0u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    for comm in comms {
        for _ in 0..100 {
            let pid = (next() % 100_000) as i32 + 1;
            let ppid = (next() % 100_000) as i32;
            let utime = next() % 1_000_000;
            let stime = next() % 1_000_000;
            let cpu = (next() % 256) as u32;
            let line = format_stat_line(pid, comm, 'S', ppid, utime, stime, cpu);
            let parsed = parse_task_stat(&line, "fuzz").unwrap();
            assert_eq!(parsed.pid, pid);
            assert_eq!(parsed.comm, comm);
            assert_eq!(parsed.state, 'S');
            assert_eq!(parsed.ppid, ppid);
            assert_eq!(parsed.utime_ticks, utime);
            assert_eq!(parsed.stime_ticks, stime);
            assert_eq!(parsed.processor, cpu);
            cases += 1;
        }
    }
    assert_eq!(cases, comms.len() * 100);
    assert!(start.elapsed().as_secs_f64() < 5.0);
    pass(10, "stat parser survives adversarial process names");
}
