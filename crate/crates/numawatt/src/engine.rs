//! Attribution loop: frame differencing, reactive task tracking, per-socket
//! credit computation, static/dynamic split, self-energy separation and
//! record emission.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    self, CpuSeconds, EnergyCredit, EnergyJoules, MemBytes, ModelParams, PowerWatts, SocketId,
    StaticMode,
};
use crate::telemetry::{
    self, RaplDomain, TaskId, TelemetryFrame, TelemetrySource, Topology,
};

/// Per-socket static powers from calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticPowers {
    /// One entry per socket.
    pub package_w: Vec<f64>,
    pub dram_w: Vec<f64>,
}

impl StaticPowers {
    pub fn zero(sockets: usize) -> Self {
        StaticPowers {
            package_w: vec![0.0; sockets],
            dram_w: vec![0.0; sockets],
        }
    }

    pub fn package(&self, s: usize) -> PowerWatts {
        PowerWatts(self.package_w.get(s).copied().unwrap_or(0.0))
    }

    pub fn dram(&self, s: usize) -> PowerWatts {
        PowerWatts(self.dram_w.get(s).copied().unwrap_or(0.0))
    }
}

/// Which applications get attribution records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Targets {
    /// Root pids; each pid tree is one application.
    Pids(Vec<i32>),
    /// Every top-level process present in the frames.
    AllJobs,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub params: ModelParams,
    pub targets: Targets,
    pub static_mode: StaticMode,
    pub pin_self: bool,
    /// Calibrated static powers; `None` treats all energy as dynamic.
    pub static_powers: Option<StaticPowers>,
    /// Pid of the tool itself, for self-energy separation in live mode.
    pub self_pid: Option<i32>,
}

impl EngineConfig {
    pub fn new(targets: Targets) -> Self {
        EngineConfig {
            params: ModelParams::default(),
            targets,
            static_mode: StaticMode::Full,
            pin_self: false,
            static_powers: None,
            self_pid: None,
        }
    }
}

/// Warning counters accumulated over an interval or a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Negative dynamic deltas clamped to zero.
    pub clamped_deltas: u32,
    /// Credit ratios above 1 clamped (sampling skew).
    pub clamped_ratios: u32,
    /// Task tick counters that regressed (pid reuse).
    pub tick_regressions: u32,
    /// Intervals skipped for zero length.
    pub zero_intervals: u32,
}

impl Diagnostics {
    pub fn merge(&mut self, other: &Diagnostics) {
        self.clamped_deltas += other.clamped_deltas;
        self.clamped_ratios += other.clamped_ratios;
        self.tick_regressions += other.tick_regressions;
        self.zero_intervals += other.zero_intervals;
    }

    pub fn warnings(&self) -> String {
        let mut parts = vec![];
        if self.clamped_deltas > 0 {
            parts.push(format!("clamped_deltas={}", self.clamped_deltas));
        }
        if self.clamped_ratios > 0 {
            parts.push(format!("clamped_ratios={}", self.clamped_ratios));
        }
        if self.tick_regressions > 0 {
            parts.push(format!("tick_regressions={}", self.tick_regressions));
        }
        if self.zero_intervals > 0 {
            parts.push(format!("zero_intervals={}", self.zero_intervals));
        }
        parts.join(",")
    }
}

/// One device (CPU or DRAM) on one socket, as attributed to one application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceSocketShare {
    /// Measured total energy of the socket domain over the interval.
    pub measured: EnergyJoules,
    /// Dynamic offset of the socket (identical across applications).
    pub delta: EnergyJoules,
    /// Full static energy of the socket (identical across applications).
    pub static_full: EnergyJoules,
    /// This application's credit on the socket.
    pub credit: EnergyCredit,
    /// Static share entering this application's total (per static mode).
    pub static_share: EnergyJoules,
}

impl DeviceSocketShare {
    pub fn attributed(&self) -> EnergyJoules {
        EnergyJoules(self.delta.0 * self.credit.0 + self.static_share.0)
    }

    pub fn dynamic_attributed(&self) -> EnergyJoules {
        EnergyJoules(self.delta.0 * self.credit.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocketAttribution {
    pub socket: SocketId,
    pub cpu: DeviceSocketShare,
    pub dram: DeviceSocketShare,
}

/// The tool's own consumption over one interval, reported out-of-band.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SelfEnergy {
    pub cpu_dynamic: EnergyJoules,
    pub dram_dynamic: EnergyJoules,
    pub cpu_total: EnergyJoules,
    pub dram_total: EnergyJoules,
}

/// Per-interval, per-application attribution output.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionRecord {
    pub t_start: f64,
    pub t_end: f64,
    pub app_id: String,
    pub per_socket: Vec<SocketAttribution>,
    pub cpu_total: EnergyJoules,
    pub dram_total: EnergyJoules,
    pub coarse_cpu: EnergyJoules,
    pub coarse_dram: EnergyJoules,
    pub self_energy: SelfEnergy,
    pub diagnostics: Diagnostics,
}

/// Per-application running totals for the run summary.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AppTotals {
    pub cpu_total: EnergyJoules,
    pub dram_total: EnergyJoules,
    pub cpu_dynamic: EnergyJoules,
    pub dram_dynamic: EnergyJoules,
    pub cpu_static: EnergyJoules,
    pub dram_static: EnergyJoules,
    pub coarse_cpu: EnergyJoules,
    pub coarse_dram: EnergyJoules,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub frames: usize,
    pub intervals: usize,
    pub records: usize,
    /// Set when the run ended before the source did (target exit) or the
    /// source failed mid-run after records were flushed.
    pub partial: bool,
    pub diagnostics: Diagnostics,
    pub per_app: BTreeMap<String, AppTotals>,
    pub self_cpu: EnergyJoules,
    pub self_dram: EnergyJoules,
}

/// Resource usage of one application over one interval, before crediting.
#[derive(Debug, Clone)]
struct AppUsage {
    label: String,
    /// Expected CPU seconds per socket.
    cpu_time: Vec<CpuSeconds>,
    /// Expected private memory per socket, bytes.
    mem: Vec<f64>,
    /// Aggregate CPU ticks over all sockets (for the coarse baseline).
    total_ticks: u64,
    /// Aggregate private bytes over all sockets (for the coarse baseline).
    total_mem: u64,
    diagnostics: Diagnostics,
}

/// Measured interval-level quantities shared by every application.
#[derive(Debug, Clone)]
struct IntervalMeasurement {
    t_start: f64,
    t_end: f64,
    /// Per socket: (measured, static_full, delta) for package and dram.
    cpu: Vec<(EnergyJoules, EnergyJoules, EnergyJoules)>,
    dram: Vec<(EnergyJoules, EnergyJoules, EnergyJoules)>,
    host_cpu: Vec<CpuSeconds>,
    host_ticks_delta: u64,
    /// Per-socket total available NUMA memory, bytes.
    mem_total: Vec<f64>,
    /// Host-wide used memory, bytes (coarse DRAM denominator).
    mem_used_total: f64,
    diagnostics: Diagnostics,
}

fn measure_interval(
    prev: &TelemetryFrame,
    curr: &TelemetryFrame,
    topology: &Topology,
    static_powers: &StaticPowers,
) -> Result<IntervalMeasurement> {
    let dt = curr.ts - prev.ts;
    let mut diagnostics = Diagnostics::default();
    let mut cpu = Vec::with_capacity(topology.sockets);
    let mut dram = Vec::with_capacity(topology.sockets);
    for s in 0..topology.sockets {
        for (domain, power, out) in [
            (RaplDomain::Package, static_powers.package(s), &mut cpu),
            (RaplDomain::Dram, static_powers.dram(s), &mut dram),
        ] {
            let measured = match (
                prev.rapl_reading(SocketId(s), domain),
                curr.rapl_reading(SocketId(s), domain),
            ) {
                (Some(p), Some(c)) => {
                    telemetry::delta_with_overflow(p.uj, c.uj, c.max_uj)?
                }
                _ => EnergyJoules(0.0),
            };
            let static_full = model::static_energy(power, dt)?;
            let delta = model::dynamic_delta(measured, static_full);
            if measured.0 < static_full.0 {
                diagnostics.clamped_deltas += 1;
            }
            out.push((measured, static_full, delta));
        }
    }
    let host_cpu = telemetry::host_cpu_time_per_socket(prev, curr, topology)?;
    let host_ticks_delta: u64 = curr
        .host_ticks
        .iter()
        .zip(&prev.host_ticks)
        .map(|(c, p)| c - p)
        .sum();
    let host_numa = curr.host_numa(topology.sockets);
    let mem_total: Vec<f64> = host_numa
        .iter()
        .map(|n| n.map(|n| n.total_b as f64).unwrap_or(0.0))
        .collect();
    let mem_used_total: f64 = host_numa
        .iter()
        .map(|n| n.map(|n| n.used_b as f64).unwrap_or(0.0))
        .sum();
    Ok(IntervalMeasurement {
        t_start: prev.ts,
        t_end: curr.ts,
        cpu,
        dram,
        host_cpu,
        host_ticks_delta,
        mem_total,
        mem_used_total,
        diagnostics,
    })
}

/// Resource usage of one task tree over a frame pair.
fn app_usage(
    prev: &TelemetryFrame,
    curr: &TelemetryFrame,
    topology: &Topology,
    label: String,
    tasks: &[TaskId],
) -> AppUsage {
    let mut diagnostics = Diagnostics::default();
    let prev_ticks: HashMap<i32, u64> = prev
        .tasks
        .iter()
        .map(|t| (t.tid, t.total_ticks()))
        .collect();
    let curr_by_tid: HashMap<i32, &telemetry::TaskCpuReading> =
        curr.tasks.iter().map(|t| (t.tid, t)).collect();

    let mut rates_and_time: Vec<(Vec<f64>, CpuSeconds)> = Vec::with_capacity(tasks.len());
    let mut total_ticks = 0u64;
    for task in tasks {
        let Some(reading) = curr_by_tid.get(&task.tid) else {
            continue; // died between enumeration and now
        };
        let now = reading.total_ticks();
        // A task born inside the interval starts from zero; a regression
        // means the tid was reused and is treated the same way.
        let delta = match prev_ticks.get(&task.tid) {
            Some(&before) if before <= now => now - before,
            Some(_) => {
                diagnostics.tick_regressions += 1;
                now
            }
            None => now,
        };
        total_ticks += delta;
        let placement = topology.socket_of_cpu(reading.cpu);
        let rates = model::cpu_residence(&[(curr.ts, placement)], topology.sockets);
        rates_and_time.push((
            rates,
            CpuSeconds(delta as f64 / topology.clk_tck as f64),
        ));
    }
    let borrowed: Vec<(&[f64], CpuSeconds)> = rates_and_time
        .iter()
        .map(|(r, t)| (r.as_slice(), *t))
        .collect();
    let cpu_time = model::expected_cpu_time(&borrowed, topology.sockets);

    // DRAM is per-process: threads share the parent's memory.
    let mut mem_tasks: Vec<(Vec<f64>, MemBytes)> = Vec::new();
    let mut total_mem = 0u64;
    for task in tasks {
        if task.is_thread_of.is_some() {
            continue;
        }
        let sample = curr.process_numa(task.pid, topology.sockets);
        let own_total: u64 = sample.iter().sum();
        if own_total == 0 {
            continue;
        }
        total_mem += own_total;
        let sample_bytes: Vec<MemBytes> = sample.into_iter().map(MemBytes).collect();
        let rates = model::mem_residence(std::slice::from_ref(&sample_bytes), topology.sockets);
        mem_tasks.push((rates, MemBytes(own_total)));
    }
    let borrowed_mem: Vec<(&[f64], MemBytes)> = mem_tasks
        .iter()
        .map(|(r, m)| (r.as_slice(), *m))
        .collect();
    let mem = model::expected_mem(&borrowed_mem, topology.sockets);

    AppUsage {
        label,
        cpu_time,
        mem,
        total_ticks,
        total_mem,
        diagnostics,
    }
}

/// Credits for one application against the interval measurement.
struct AppCredits {
    cpu: Vec<EnergyCredit>,
    dram: Vec<EnergyCredit>,
    diagnostics: Diagnostics,
}

fn app_credits(usage: &AppUsage, m: &IntervalMeasurement, params: &ModelParams) -> AppCredits {
    let mut diagnostics = Diagnostics::default();
    let cpu = usage
        .cpu_time
        .iter()
        .zip(&m.host_cpu)
        .map(|(t_app, t_total)| {
            let out = model::cpu_credit(*t_app, *t_total, params.gamma);
            if out.ratio_clamped {
                diagnostics.clamped_ratios += 1;
            }
            out.credit
        })
        .collect();
    let dram = usage
        .mem
        .iter()
        .zip(&m.mem_total)
        .map(|(m_app, m_total)| {
            let out = model::mem_credit(*m_app, *m_total, params.sigma);
            if out.ratio_clamped {
                diagnostics.clamped_ratios += 1;
            }
            out.credit
        })
        .collect();
    AppCredits {
        cpu,
        dram,
        diagnostics,
    }
}

fn static_share(
    static_full: EnergyJoules,
    credit: EnergyCredit,
    credit_sum: f64,
    mode: StaticMode,
) -> EnergyJoules {
    match mode {
        StaticMode::Full => static_full,
        StaticMode::Excluded => EnergyJoules(0.0),
        StaticMode::Apportioned => {
            if credit_sum > 0.0 {
                EnergyJoules(static_full.0 * credit.0 / credit_sum)
            } else {
                EnergyJoules(0.0)
            }
        }
    }
}

/// Attribution of one application over one frame pair; the full composition
/// of the per-socket model operations.
pub fn compute_frame_attribution(
    prev: &TelemetryFrame,
    curr: &TelemetryFrame,
    topology: &Topology,
    static_powers: &StaticPowers,
    app_label: &str,
    app_tasks: &[TaskId],
    params: &ModelParams,
    static_mode: StaticMode,
) -> Result<AttributionRecord> {
    if curr.ts <= prev.ts {
        return Err(Error::InvalidArgument(
            "zero-length attribution interval".into(),
        ));
    }
    let m = measure_interval(prev, curr, topology, static_powers)?;
    let usage = app_usage(prev, curr, topology, app_label.to_string(), app_tasks);
    let credits = app_credits(&usage, &m, params);
    // Single-application path: the app is the whole apportioning population.
    let cpu_sums: Vec<f64> = credits.cpu.iter().map(|c| c.0).collect();
    let dram_sums: Vec<f64> = credits.dram.iter().map(|c| c.0).collect();
    Ok(build_record(
        &m,
        &usage,
        &credits,
        &cpu_sums,
        &dram_sums,
        static_mode,
        SelfEnergy::default(),
        topology,
    ))
}

#[allow(clippy::too_many_arguments)]
fn build_record(
    m: &IntervalMeasurement,
    usage: &AppUsage,
    credits: &AppCredits,
    cpu_credit_sums: &[f64],
    dram_credit_sums: &[f64],
    static_mode: StaticMode,
    self_energy: SelfEnergy,
    topology: &Topology,
) -> AttributionRecord {
    let mut per_socket = Vec::with_capacity(topology.sockets);
    for s in 0..topology.sockets {
        let (cpu_measured, cpu_static, cpu_delta) = m.cpu[s];
        let (dram_measured, dram_static, dram_delta) = m.dram[s];
        per_socket.push(SocketAttribution {
            socket: SocketId(s),
            cpu: DeviceSocketShare {
                measured: cpu_measured,
                delta: cpu_delta,
                static_full: cpu_static,
                credit: credits.cpu[s],
                static_share: static_share(cpu_static, credits.cpu[s], cpu_credit_sums[s], static_mode),
            },
            dram: DeviceSocketShare {
                measured: dram_measured,
                delta: dram_delta,
                static_full: dram_static,
                credit: credits.dram[s],
                static_share: static_share(dram_static, credits.dram[s], dram_credit_sums[s], static_mode),
            },
        });
    }
    let cpu_shares: Vec<model::SocketShare> = per_socket
        .iter()
        .map(|sa| model::SocketShare {
            dynamic_delta: sa.cpu.delta,
            credit: sa.cpu.credit,
            static_part: sa.cpu.static_share,
        })
        .collect();
    let dram_shares: Vec<model::SocketShare> = per_socket
        .iter()
        .map(|sa| model::SocketShare {
            dynamic_delta: sa.dram.delta,
            credit: sa.dram.credit,
            static_part: sa.dram.static_share,
        })
        .collect();
    let cpu_total = model::attribute_cpu(&cpu_shares);
    let dram_total = model::attribute_dram(&dram_shares);

    // Coarse socket-blind baseline for side-by-side reporting.
    let cpu_measured_all = EnergyJoules(m.cpu.iter().map(|(t, _, _)| t.0).sum());
    let dram_measured_all = EnergyJoules(m.dram.iter().map(|(t, _, _)| t.0).sum());
    let coarse_cpu = if m.host_ticks_delta > 0 {
        model::coarse_attribute(
            cpu_measured_all,
            usage.total_ticks as f64,
            m.host_ticks_delta as f64,
        )
        .unwrap_or(EnergyJoules(0.0))
    } else {
        EnergyJoules(0.0)
    };
    let coarse_dram = if m.mem_used_total > 0.0 {
        model::coarse_attribute(dram_measured_all, usage.total_mem as f64, m.mem_used_total)
            .unwrap_or(EnergyJoules(0.0))
    } else {
        EnergyJoules(0.0)
    };

    let mut diagnostics = m.diagnostics;
    diagnostics.merge(&usage.diagnostics);
    diagnostics.merge(&credits.diagnostics);

    AttributionRecord {
        t_start: m.t_start,
        t_end: m.t_end,
        app_id: usage.label.clone(),
        per_socket,
        cpu_total,
        dram_total,
        coarse_cpu,
        coarse_dram,
        self_energy,
        diagnostics,
    }
}

/// Logical CPU with the smallest tick delta over the last interval; ties
/// break toward the lowest index. `None` when there is nothing to choose.
pub fn least_loaded_core(per_cpu_deltas: &[u64]) -> Option<u32> {
    per_cpu_deltas
        .iter()
        .enumerate()
        .min_by_key(|&(i, &d)| (d, i))
        .map(|(i, _)| i as u32)
}

/// Pins the calling thread to one CPU; failure is reported, not fatal.
pub fn pin_current_thread(cpu: u32) -> Result<()> {
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_ZERO(&mut set);
        libc::CPU_SET(cpu as usize, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            return Err(Error::UnsupportedPlatform(format!(
                "sched_setaffinity to CPU {cpu} denied"
            )));
        }
    }
    Ok(())
}

/// Runs the attribution loop over a telemetry source, emitting one record per
/// interval and target into `sink`.
pub fn run_attribution(
    config: &EngineConfig,
    source: &mut dyn TelemetrySource,
    sink: &mut dyn FnMut(&AttributionRecord) -> Result<()>,
) -> Result<RunSummary> {
    config.params.validate()?;
    let topology = source.topology().clone();
    topology.validate()?;
    let static_powers = config
        .static_powers
        .clone()
        .unwrap_or_else(|| StaticPowers::zero(topology.sockets));
    let live = source.is_live();

    let mut summary = RunSummary::default();
    let Some(mut prev) = source.next_frame()? else {
        return Err(Error::InvalidArgument(
            "telemetry source yielded no frames".into(),
        ));
    };
    summary.frames = 1;

    // Startup check: explicit pid targets must exist in the first frame.
    if let Targets::Pids(pids) = &config.targets {
        if pids.is_empty() {
            return Err(Error::InvalidArgument("no target pids".into()));
        }
        for &pid in pids {
            telemetry::enumerate_tasks(&prev, pid)?;
        }
    }

    let mut alive: Option<Vec<i32>> = match &config.targets {
        Targets::Pids(pids) => Some(pids.clone()),
        Targets::AllJobs => None,
    };

    loop {
        let curr = match source.next_frame() {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => {
                // Flush what we have; report partial.
                summary.partial = true;
                eprintln!("warning: telemetry source failed mid-run: {e}");
                break;
            }
        };
        summary.frames += 1;
        let dt = curr.ts - prev.ts;
        if dt <= 0.0 {
            summary.diagnostics.zero_intervals += 1;
            prev = curr;
            continue;
        }

        let m = measure_interval(&prev, &curr, &topology, &static_powers)?;

        // Target set for this interval, re-evaluated every frame.
        let roots: Vec<(String, i32)> = match &mut alive {
            Some(pids) => {
                pids.retain(|&pid| telemetry::enumerate_tasks(&curr, pid).is_ok());
                pids.iter().map(|&p| (p.to_string(), p)).collect()
            }
            None => telemetry::enumerate_all_roots(&curr)
                .into_iter()
                .filter(|&p| Some(p) != config.self_pid)
                .map(|p| (p.to_string(), p))
                .collect(),
        };
        if let Some(pids) = &alive {
            if pids.is_empty() {
                summary.partial = true;
                break;
            }
        }

        let mut usages = Vec::with_capacity(roots.len());
        for (label, root) in &roots {
            let tasks = telemetry::enumerate_tasks(&curr, *root)?;
            usages.push(app_usage(&prev, &curr, &topology, label.clone(), &tasks));
        }
        let credits: Vec<AppCredits> = usages
            .iter()
            .map(|u| app_credits(u, &m, &config.params))
            .collect();

        // Self-energy: attributed like an application, never added to targets.
        let self_pair = if live {
            config.self_pid.and_then(|pid| {
                telemetry::enumerate_tasks(&curr, pid).ok().map(|tasks| {
                    let usage =
                        app_usage(&prev, &curr, &topology, "self".into(), &tasks);
                    let c = app_credits(&usage, &m, &config.params);
                    (usage, c)
                })
            })
        } else {
            None
        };

        // Apportioning population: all targets plus the tool itself.
        let mut cpu_sums = vec![0.0f64; topology.sockets];
        let mut dram_sums = vec![0.0f64; topology.sockets];
        for c in credits
            .iter()
            .chain(self_pair.as_ref().map(|(_, c)| c))
        {
            for s in 0..topology.sockets {
                cpu_sums[s] += c.cpu[s].0;
                dram_sums[s] += c.dram[s].0;
            }
        }

        let self_energy = match &self_pair {
            Some((usage, c)) => {
                let record = build_record(
                    &m,
                    usage,
                    c,
                    &cpu_sums,
                    &dram_sums,
                    config.static_mode,
                    SelfEnergy::default(),
                    &topology,
                );
                SelfEnergy {
                    cpu_dynamic: EnergyJoules(
                        record
                            .per_socket
                            .iter()
                            .map(|s| s.cpu.dynamic_attributed().0)
                            .sum(),
                    ),
                    dram_dynamic: EnergyJoules(
                        record
                            .per_socket
                            .iter()
                            .map(|s| s.dram.dynamic_attributed().0)
                            .sum(),
                    ),
                    cpu_total: record.cpu_total,
                    dram_total: record.dram_total,
                }
            }
            None => SelfEnergy::default(),
        };

        summary.intervals += 1;
        for (usage, c) in usages.iter().zip(&credits) {
            let record = build_record(
                &m,
                usage,
                c,
                &cpu_sums,
                &dram_sums,
                config.static_mode,
                self_energy,
                &topology,
            );
            summary.diagnostics.merge(&record.diagnostics);
            let totals = summary.per_app.entry(record.app_id.clone()).or_default();
            totals.cpu_total.0 += record.cpu_total.0;
            totals.dram_total.0 += record.dram_total.0;
            for sa in &record.per_socket {
                totals.cpu_dynamic.0 += sa.cpu.dynamic_attributed().0;
                totals.dram_dynamic.0 += sa.dram.dynamic_attributed().0;
                totals.cpu_static.0 += sa.cpu.static_share.0;
                totals.dram_static.0 += sa.dram.static_share.0;
            }
            totals.coarse_cpu.0 += record.coarse_cpu.0;
            totals.coarse_dram.0 += record.coarse_dram.0;
            sink(&record)?;
            summary.records += 1;
        }
        summary.self_cpu.0 += self_energy.cpu_total.0;
        summary.self_dram.0 += self_energy.dram_total.0;

        // Keep the tool off busy cores between intervals.
        if live && config.pin_self {
            if let (Some(prev_cpu), Some(curr_cpu)) =
                (&prev.per_cpu_ticks, &curr.per_cpu_ticks)
            {
                let deltas: Vec<u64> = curr_cpu
                    .iter()
                    .zip(prev_cpu)
                    .map(|(c, p)| c.saturating_sub(*p))
                    .collect();
                if let Some(cpu) = least_loaded_core(&deltas) {
                    if let Err(e) = pin_current_thread(cpu) {
                        eprintln!("warning: {e}");
                    }
                }
            }
        }

        prev = curr;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_loaded_core_argmin_with_tie_rule() {
        assert_eq!(least_loaded_core(&[5, 1, 9, 1]), Some(1));
        assert_eq!(least_loaded_core(&[3, 3, 3]), Some(0));
        assert_eq!(least_loaded_core(&[]), None);
    }

    #[test]
    fn static_share_modes() {
        let full = EnergyJoules(0.5);
        let c = EnergyCredit(0.25);
        assert_eq!(static_share(full, c, 0.5, StaticMode::Full).0, 0.5);
        assert_eq!(static_share(full, c, 0.5, StaticMode::Excluded).0, 0.0);
        assert_eq!(static_share(full, c, 0.5, StaticMode::Apportioned).0, 0.25);
        // Idle interval: no credits, nothing apportioned.
        assert_eq!(static_share(full, EnergyCredit(0.0), 0.0, StaticMode::Apportioned).0, 0.0);
    }
}
