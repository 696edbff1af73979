//! The dual-socket worked example: one application runs a thread on each
//! socket of a two-socket host for an interval in which socket 0 spends
//! 100 s of CPU time (30 s of it ours) and 30 J, while socket 1 spends
//! 200 s (180 s ours) and 50 J.
//!
//! Socket-aware attribution charges 30/100 x 30 + 180/200 x 50 = 54 J.
//! A socket-blind share of the summed counters charges 210/300 x 80 = 56 J,
//! overcharging the app because it cannot see that most of its time ran on
//! the cheaper socket.
//!
//! Run with: cargo run --example worked_example

use std::io::Cursor;

use numawatt::engine::{run_attribution, EngineConfig, Targets};
use numawatt::model::SocketId;
use numawatt::telemetry::trace::ReplaySource;
use numawatt::telemetry::{
    RaplDomain, RaplReading, TaskCpuReading, TelemetryFrame, Topology, TraceWriter,
};

fn main() -> anyhow::Result<()> {
    let topology = Topology {
        sockets: 2,
        cpu_map: vec![0, 1],
        clk_tck: 1, // one tick per second keeps the numbers readable
    };
    let rapl = |uj0, uj1| {
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
    let task = |tid, utime, cpu| TaskCpuReading {
        pid: 10,
        tid,
        ppid: Some(1),
        utime,
        stime: 0,
        cpu,
        state: 'R',
    };

    let mut bytes = Vec::new();
    let mut w = TraceWriter::new(&mut bytes, &topology)?;
    w.write_frame(&TelemetryFrame {
        ts: 0.0,
        rapl: rapl(0, 0),
        host_ticks: vec![0, 0],
        tasks: vec![task(10, 0, 0), task(11, 0, 1)],
        numa: vec![],
        per_cpu_ticks: None,
    })?;
    w.write_frame(&TelemetryFrame {
        ts: 1.0,
        rapl: rapl(30_000_000, 50_000_000),
        host_ticks: vec![100, 200],
        tasks: vec![task(10, 30, 0), task(11, 180, 1)],
        numa: vec![],
        per_cpu_ticks: None,
    })?;
    w.finish()?;

    let mut source = ReplaySource::new(Cursor::new(bytes))?;
    let config = EngineConfig::new(Targets::Pids(vec![10]));
    let mut records = Vec::new();
    run_attribution(&config, &mut source, &mut |r| {
        records.push(r.clone());
        Ok(())
    })?;

    let r = &records[0];
    for sa in &r.per_socket {
        println!(
            "socket {}: measured {:>4.1} J, app credit {:.2} -> {:>4.1} J",
            sa.socket.0,
            sa.cpu.measured.0,
            sa.cpu.credit.0,
            sa.cpu.attributed().0
        );
    }
    println!("socket-aware attribution: {:.3} J", r.cpu_total.0);
    println!("socket-blind baseline:    {:.3} J", r.coarse_cpu.0);
    assert!((r.cpu_total.0 - 54.0).abs() < 1e-9);
    assert!((r.coarse_cpu.0 - 56.0).abs() < 1e-9);
    Ok(())
}
