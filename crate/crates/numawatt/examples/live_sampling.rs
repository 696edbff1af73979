//! Samples the live host for one second and prints per-socket power, if the
//! RAPL powercap interface is available (usually requires root). Set
//! NUMAWATT_SYS_ROOT to point the readers at a fabricated tree instead.
//!
//! Run with: cargo run --example live_sampling

use std::time::Duration;

use numawatt::telemetry::live::{LiveSource, LiveTargets};
use numawatt::telemetry::TelemetrySource;
use numawatt::Error;

fn main() -> anyhow::Result<()> {
    let mut source = match LiveSource::open_default(LiveTargets::AllJobs) {
        Ok(s) => s,
        Err(Error::UnsupportedPlatform(reason)) => {
            println!("live sampling unavailable here: {reason}");
            println!("(try as root on a machine with intel-rapl powercap support)");
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    let topology = source.topology().clone();
    println!(
        "{} sockets, {} CPUs, {} ticks/s",
        topology.sockets,
        topology.cpu_map.len(),
        topology.clk_tck
    );

    let prev = source.next_frame()?.expect("first frame");
    std::thread::sleep(Duration::from_secs(1));
    let curr = source.next_frame()?.expect("second frame");
    let dt = curr.ts - prev.ts;
    for s in 0..topology.sockets {
        for domain in [
            numawatt::telemetry::RaplDomain::Package,
            numawatt::telemetry::RaplDomain::Dram,
        ] {
            let (Some(p), Some(c)) = (
                prev.rapl_reading(numawatt::model::SocketId(s), domain),
                curr.rapl_reading(numawatt::model::SocketId(s), domain),
            ) else {
                continue;
            };
            let e = numawatt::telemetry::delta_with_overflow(p.uj, c.uj, c.max_uj)?;
            println!("socket {s} {domain:?}: {:.2} W", e.0 / dt);
        }
    }
    println!("{} tasks visible", curr.tasks.len());
    Ok(())
}
