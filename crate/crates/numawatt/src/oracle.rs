//! Synthetic ground-truth generator: turns declarative multi-tenant
//! scenarios into trace files plus exact per-application energy ground
//! truth, for validation that is impossible against real hardware.
//!
//! The generative power model is additive and linear: each socket accrues
//! static power plus a dynamic coefficient scaled by the usage the emitted
//! counters actually carry, so an attribution run with unit exponents must
//! recover every application's share exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::AttributionRecord;
use crate::error::{Error, Result};
use crate::model::SocketId;
use crate::telemetry::{
    NumaMemReading, RaplDomain, RaplReading, TaskCpuReading, TelemetryFrame, Topology, TraceWriter,
};

pub const TRUTH_VERSION: u32 = 1;

const GIB: u64 = 1 << 30;
const MIB: u64 = 1 << 20;

/// Relationship of a task to the rest of the scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Top-level process: one application root.
    Process,
    /// Thread inside the named process (shares its memory).
    ThreadOf(String),
    /// Child process of the named process (same application).
    ChildOf(String),
}

/// One step of a piecewise-constant schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpuStep {
    pub t: f64,
    /// Utilization per socket, in CPUs (one task occupies at most one CPU).
    pub per_socket: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemStep {
    pub t: f64,
    /// Private resident bytes per NUMA node.
    pub per_socket: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub label: String,
    pub kind: TaskKind,
    #[serde(default)]
    pub start: f64,
    /// Defaults to the scenario duration. Infinity (run to the end) is
    /// stored as an absent field, since JSON has no infinity literal.
    #[serde(
        default = "default_end",
        skip_serializing_if = "is_infinite",
        deserialize_with = "de_end"
    )]
    pub end: f64,
    #[serde(default)]
    pub cpu: Vec<CpuStep>,
    /// Memory schedule; only meaningful on processes.
    #[serde(default)]
    pub mem: Vec<MemStep>,
}

fn default_end() -> f64 {
    f64::INFINITY
}

fn is_infinite(v: &f64) -> bool {
    v.is_infinite()
}

fn de_end<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// Declarative multi-tenant workload with exact ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub topology: Topology,
    pub duration: f64,
    pub frame_period: f64,
    /// Per-socket static powers, watts.
    pub static_package_w: Vec<f64>,
    pub static_dram_w: Vec<f64>,
    /// Per-socket dynamic watts at full utilization.
    pub dyn_cpu_coeff_w: Vec<f64>,
    pub dyn_dram_coeff_w: Vec<f64>,
    /// Total available memory per NUMA node, bytes.
    pub mem_per_node_b: Vec<u64>,
    /// RAPL counter wrap range, microjoules.
    pub max_range_uj: u64,
    pub seed: u64,
    pub tasks: Vec<TaskSpec>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        let sockets = self.topology.sockets;
        if self.duration < 2.0 * self.frame_period {
            return Err(Error::InvalidScenario(format!(
                "duration {} shorter than two frame periods",
                self.duration
            )));
        }
        if !(self.frame_period > 0.0) {
            return Err(Error::InvalidScenario("frame period must be positive".into()));
        }
        for (name, v) in [
            ("static_package_w", &self.static_package_w),
            ("static_dram_w", &self.static_dram_w),
            ("dyn_cpu_coeff_w", &self.dyn_cpu_coeff_w),
            ("dyn_dram_coeff_w", &self.dyn_dram_coeff_w),
        ] {
            if v.len() != sockets {
                return Err(Error::InvalidScenario(format!(
                    "{name} has {} entries for {sockets} sockets",
                    v.len()
                )));
            }
            if v.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::InvalidScenario(format!("{name} has a negative entry")));
            }
        }
        if self.mem_per_node_b.len() != sockets {
            return Err(Error::InvalidScenario("mem_per_node_b does not match sockets".into()));
        }
        if self.max_range_uj == 0 {
            return Err(Error::InvalidScenario("max_range_uj must be positive".into()));
        }
        let labels: Vec<&str> = self.tasks.iter().map(|t| t.label.as_str()).collect();
        for task in &self.tasks {
            match &task.kind {
                TaskKind::Process => {}
                TaskKind::ThreadOf(parent) | TaskKind::ChildOf(parent) => {
                    if !labels.contains(&parent.as_str()) {
                        return Err(Error::InvalidScenario(format!(
                            "task {} references unknown parent {parent}",
                            task.label
                        )));
                    }
                }
            }
            if let TaskKind::ThreadOf(_) = task.kind {
                if !task.mem.is_empty() {
                    return Err(Error::InvalidScenario(format!(
                        "thread {} carries a memory schedule; memory is per process",
                        task.label
                    )));
                }
            }
            for step in &task.cpu {
                if step.per_socket.len() != sockets {
                    return Err(Error::InvalidScenario(format!(
                        "task {}: cpu step at {} has wrong socket count",
                        task.label, step.t
                    )));
                }
            }
            for step in &task.mem {
                if step.per_socket.len() != sockets {
                    return Err(Error::InvalidScenario(format!(
                        "task {}: mem step at {} has wrong socket count",
                        task.label, step.t
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration / self.frame_period).round() as usize
    }
}

fn eval_cpu(steps: &[CpuStep], t: f64, sockets: usize) -> Vec<f64> {
    let mut out = vec![0.0; sockets];
    for step in steps {
        if step.t <= t {
            out.copy_from_slice(&step.per_socket);
        }
    }
    out
}

fn eval_mem(steps: &[MemStep], t: f64, sockets: usize) -> Vec<u64> {
    let mut out = vec![0u64; sockets];
    for step in steps {
        if step.t <= t {
            out.copy_from_slice(&step.per_socket);
        }
    }
    out
}

/// Ground-truth file header: scenario metadata an attribution run needs to
/// interpret the rows (static powers, label-to-pid map).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthHeader {
    pub version: u32,
    pub scenario: String,
    pub frame_period: f64,
    pub static_package_w: Vec<f64>,
    pub static_dram_w: Vec<f64>,
    /// Application label -> root pid in the trace.
    pub labels: BTreeMap<String, i32>,
}

/// One truth row. `label = None` marks a per-socket totals row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthRow {
    pub t0: f64,
    pub t1: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
    pub socket: usize,
    pub cpu_dyn_j: f64,
    pub dram_dyn_j: f64,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub header: TruthHeader,
    pub rows: Vec<TruthRow>,
}

impl GroundTruth {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::InvalidTrace("empty truth file".into()))?
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let header: TruthHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::parse("truth header", e.to_string()))?;
        if header.version != TRUTH_VERSION {
            return Err(Error::InvalidTrace(format!(
                "truth version {} unsupported",
                header.version
            )));
        }
        let mut rows = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            rows.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::parse("truth row", e.to_string()))?,
            );
        }
        Ok(GroundTruth { header, rows })
    }
}

#[derive(Debug, Clone, Default)]
pub struct GenerateSummary {
    pub frames: usize,
    pub tasks: usize,
    pub wraps: usize,
    pub trace_bytes: u64,
}

struct TaskState {
    spec_idx: usize,
    label: String,
    app_label: String,
    pid: i32,
    tid: i32,
    ppid: Option<i32>,
    is_process: bool,
    /// Cumulative desired ticks (fractional) and granted ticks.
    desired: f64,
    granted: u64,
    /// Per-socket fractional tick debt, for placement selection.
    owed: Vec<f64>,
    last_socket: usize,
}

/// Resolves pids/tids and application roots for every task spec.
fn assign_identities(scenario: &Scenario) -> Result<Vec<TaskState>> {
    let sockets = scenario.topology.sockets;
    let mut states: Vec<TaskState> = Vec::with_capacity(scenario.tasks.len());
    let mut next_pid = 100;
    let mut thread_counters: BTreeMap<i32, i32> = BTreeMap::new();
    let mut by_label: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, spec) in scenario.tasks.iter().enumerate() {
        let (pid, tid, ppid, app_label, is_process) = match &spec.kind {
            TaskKind::Process => {
                let pid = next_pid;
                next_pid += 100;
                (pid, pid, None, spec.label.clone(), true)
            }
            TaskKind::ThreadOf(parent) => {
                let p = &states[*by_label.get(parent).ok_or_else(|| {
                    Error::InvalidScenario(format!("unknown parent {parent}"))
                })?];
                let n = thread_counters.entry(p.pid).or_insert(0);
                *n += 1;
                (p.pid, p.pid + *n, p.ppid, p.app_label.clone(), false)
            }
            TaskKind::ChildOf(parent) => {
                let p = &states[*by_label.get(parent).ok_or_else(|| {
                    Error::InvalidScenario(format!("unknown parent {parent}"))
                })?];
                let pid = next_pid;
                next_pid += 100;
                (pid, pid, Some(p.pid), p.app_label.clone(), true)
            }
        };
        by_label.insert(spec.label.clone(), idx);
        states.push(TaskState {
            spec_idx: idx,
            label: spec.label.clone(),
            app_label,
            pid,
            tid,
            ppid,
            is_process,
            desired: 0.0,
            granted: 0,
            owed: vec![0.0; sockets],
            last_socket: 0,
        });
    }
    Ok(states)
}

fn tmp_sibling(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Generates a trace (and optionally a ground-truth file) from a scenario.
/// Output is deterministic given the scenario and seed; files are written to
/// a temporary sibling and renamed into place.
pub fn generate_trace(
    scenario: &Scenario,
    trace_path: impl AsRef<Path>,
    truth_path: Option<&Path>,
) -> Result<GenerateSummary> {
    scenario.validate()?;
    let topo = &scenario.topology;
    let sockets = topo.sockets;
    let period = scenario.frame_period;
    let clk = topo.clk_tck as f64;
    let uj_per_tick_w = 1e6 / clk; // microjoules per tick per watt

    let mut cpus_of_socket: Vec<Vec<u32>> = vec![Vec::new(); sockets];
    for (cpu, &s) in topo.cpu_map.iter().enumerate() {
        cpus_of_socket[s].push(cpu as u32);
    }
    for (s, cpus) in cpus_of_socket.iter().enumerate() {
        if cpus.is_empty() {
            return Err(Error::InvalidScenario(format!("socket {s} has no CPUs")));
        }
    }

    let mut states = assign_identities(scenario)?;
    let labels: BTreeMap<String, i32> = states
        .iter()
        .filter(|t| t.is_process && t.ppid.is_none())
        .map(|t| (t.app_label.clone(), t.pid))
        .collect();

    let trace_path = trace_path.as_ref();
    let tmp_trace = tmp_sibling(trace_path);
    let mut writer = TraceWriter::create(&tmp_trace, topo)?;

    let mut truth_writer = match truth_path {
        Some(p) => {
            let tmp = tmp_sibling(p);
            let f = fs::File::create(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
            let mut w = BufWriter::new(f);
            let header = TruthHeader {
                version: TRUTH_VERSION,
                scenario: scenario.name.clone(),
                frame_period: period,
                static_package_w: scenario.static_package_w.clone(),
                static_dram_w: scenario.static_dram_w.clone(),
                labels: labels.clone(),
            };
            serde_json::to_writer(&mut w, &header)
                .map_err(|e| Error::InvalidScenario(e.to_string()))?;
            w.write_all(b"\n").map_err(|e| Error::io("truth", e))?;
            Some((w, tmp, p.to_path_buf()))
        }
        None => None,
    };

    // Cumulative counters, exact in f64 for the magnitudes involved.
    let mut pkg_cum_uj = vec![0.0f64; sockets];
    let mut dram_cum_uj = vec![0.0f64; sockets];
    let mut prev_pkg_counter = vec![0u64; sockets];
    let mut prev_dram_counter = vec![0u64; sockets];
    let mut host_ticks = vec![0u64; sockets];
    let mut wraps = 0usize;

    let frame_count = scenario.frame_count();
    let mut summary = GenerateSummary {
        frames: 0,
        tasks: states.len(),
        wraps: 0,
        trace_bytes: 0,
    };

    for i in 0..=frame_count {
        let t = i as f64 * period;
        let t_prev = (i as f64 - 1.0) * period;

        let mut pkg_dyn_uj = vec![0.0f64; sockets];
        let mut dram_dyn_uj = vec![0.0f64; sockets];
        // (app_label, socket) -> (cpu_dyn_j, dram_dyn_j) for this interval.
        let mut truth_acc: BTreeMap<(String, usize), (f64, f64)> = BTreeMap::new();
        let mut tasks = Vec::new();
        let mut numa = Vec::new();
        let mut used = vec![0u64; sockets];
        let mut util_sum = vec![0.0f64; sockets];

        for state in &mut states {
            let spec = &scenario.tasks[state.spec_idx];
            let active = t >= spec.start && t <= spec.end && t <= scenario.duration;
            if !active {
                continue;
            }
            if truth_writer.is_some() && state.is_process && state.ppid.is_none() {
                truth_acc
                    .entry((state.app_label.clone(), 0))
                    .or_default();
            }

            // CPU: grant this interval's ticks to the most-owed socket.
            let mut socket = state.last_socket;
            if i > 0 {
                let eval_at = t_prev.max(spec.start);
                let util = eval_cpu(&spec.cpu, eval_at, sockets);
                for (s, &u) in util.iter().enumerate() {
                    if u < 0.0 {
                        return Err(Error::InvalidScenario(format!(
                            "task {}: negative utilization at t={eval_at}",
                            state.label
                        )));
                    }
                    util_sum[s] += u;
                    let d = u * period * clk;
                    state.desired += d;
                    state.owed[s] += d;
                }
                let ticks = (state.desired.round() as u64).saturating_sub(state.granted);
                if ticks > 0 {
                    socket = state
                        .owed
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                        .map(|(s, _)| s)
                        .unwrap_or(0);
                    state.owed[socket] -= ticks as f64;
                    state.granted += ticks;
                    host_ticks[socket] += ticks;
                    let joules = scenario.dyn_cpu_coeff_w[socket] * ticks as f64 / clk;
                    pkg_dyn_uj[socket] += scenario.dyn_cpu_coeff_w[socket]
                        * ticks as f64
                        * uj_per_tick_w;
                    if truth_writer.is_some() {
                        truth_acc
                            .entry((state.app_label.clone(), socket))
                            .or_default()
                            .0 += joules;
                    }
                }
                state.last_socket = socket;
            }

            // Deterministic CPU index inside the socket, rotating for texture.
            let cpus = &cpus_of_socket[socket];
            let cpu = cpus[(i as u64 + state.tid as u64 + scenario.seed) as usize % cpus.len()];
            tasks.push(TaskCpuReading {
                pid: state.pid,
                tid: state.tid,
                ppid: state.ppid,
                utime: state.granted,
                stime: 0,
                cpu,
                state: 'R',
            });

            // Memory snapshot at the frame instant drives this interval.
            if state.is_process {
                let mem = eval_mem(&spec.mem, t, sockets);
                let own_total: u64 = mem.iter().sum();
                for (s, &bytes) in mem.iter().enumerate() {
                    used[s] += bytes;
                    if own_total > 0 {
                        numa.push(NumaMemReading {
                            pid: Some(state.pid),
                            node: SocketId(s),
                            private_b: bytes,
                            used_b: bytes,
                            total_b: 0,
                        });
                    }
                    if i > 0 && bytes > 0 {
                        let frac = bytes as f64 / scenario.mem_per_node_b[s] as f64;
                        let joules = scenario.dyn_dram_coeff_w[s] * frac * period;
                        dram_dyn_uj[s] += joules * 1e6;
                        if truth_writer.is_some() {
                            truth_acc
                                .entry((state.app_label.clone(), s))
                                .or_default()
                                .1 += joules;
                        }
                    }
                }
            }
        }

        // Capacity checks, reported with time and socket.
        for s in 0..sockets {
            if util_sum[s] > cpus_of_socket[s].len() as f64 + 1e-9 {
                return Err(Error::InvalidScenario(format!(
                    "CPU capacity exceeded on socket {s} at t={t:.3}: {} > {}",
                    util_sum[s],
                    cpus_of_socket[s].len()
                )));
            }
            if used[s] > scenario.mem_per_node_b[s] {
                return Err(Error::InvalidScenario(format!(
                    "memory capacity exceeded on node {s} at t={t:.3}: {} > {}",
                    used[s], scenario.mem_per_node_b[s]
                )));
            }
        }

        // Host rows and RAPL counters.
        for s in 0..sockets {
            numa.push(NumaMemReading {
                pid: None,
                node: SocketId(s),
                private_b: 0,
                used_b: used[s],
                total_b: scenario.mem_per_node_b[s],
            });
        }
        let mut rapl = Vec::with_capacity(sockets * 2);
        for s in 0..sockets {
            for (cum, dyn_uj, static_w, prev_counter, domain) in [
                (
                    &mut pkg_cum_uj[s],
                    pkg_dyn_uj[s],
                    scenario.static_package_w[s],
                    &mut prev_pkg_counter[s],
                    RaplDomain::Package,
                ),
                (
                    &mut dram_cum_uj[s],
                    dram_dyn_uj[s],
                    scenario.static_dram_w[s],
                    &mut prev_dram_counter[s],
                    RaplDomain::Dram,
                ),
            ] {
                if i > 0 {
                    let accrual = static_w * period * 1e6 + dyn_uj;
                    if accrual >= scenario.max_range_uj as f64 {
                        return Err(Error::InvalidScenario(format!(
                            "per-frame accrual {accrual:.0} uJ reaches the counter range \
                             {}; a wrap would be ambiguous",
                            scenario.max_range_uj
                        )));
                    }
                    *cum += accrual;
                }
                let counter = (cum.round() as u64) % scenario.max_range_uj;
                if counter < *prev_counter {
                    wraps += 1;
                }
                *prev_counter = counter;
                rapl.push(RaplReading {
                    socket: SocketId(s),
                    domain,
                    uj: counter,
                    max_uj: scenario.max_range_uj,
                });
            }
        }

        writer.write_frame(&TelemetryFrame {
            ts: t,
            rapl,
            host_ticks: host_ticks.clone(),
            tasks,
            numa,
            per_cpu_ticks: None,
        })?;
        summary.frames += 1;

        // Truth rows for this interval: per-application, then per-socket totals.
        if i > 0 {
            if let Some((w, _, _)) = truth_writer.as_mut() {
                let mut totals = vec![(0.0f64, 0.0f64); sockets];
                let apps: std::collections::BTreeSet<String> =
                    truth_acc.keys().map(|(l, _)| l.clone()).collect();
                for app in apps {
                    for s in 0..sockets {
                        let (cpu_j, dram_j) = truth_acc
                            .get(&(app.clone(), s))
                            .copied()
                            .unwrap_or((0.0, 0.0));
                        totals[s].0 += cpu_j;
                        totals[s].1 += dram_j;
                        let row = TruthRow {
                            t0: t_prev,
                            t1: t,
                            label: Some(app.clone()),
                            socket: s,
                            cpu_dyn_j: cpu_j,
                            dram_dyn_j: dram_j,
                        };
                        serde_json::to_writer(&mut *w, &row)
                            .map_err(|e| Error::InvalidScenario(e.to_string()))?;
                        w.write_all(b"\n").map_err(|e| Error::io("truth", e))?;
                    }
                }
                for (s, (cpu_j, dram_j)) in totals.iter().enumerate() {
                    let row = TruthRow {
                        t0: t_prev,
                        t1: t,
                        label: None,
                        socket: s,
                        cpu_dyn_j: *cpu_j,
                        dram_dyn_j: *dram_j,
                    };
                    serde_json::to_writer(&mut *w, &row)
                        .map_err(|e| Error::InvalidScenario(e.to_string()))?;
                    w.write_all(b"\n").map_err(|e| Error::io("truth", e))?;
                }
            }
        }
    }

    let out = writer.finish()?;
    drop(out);
    summary.trace_bytes = fs::metadata(&tmp_trace).map(|m| m.len()).unwrap_or(0);
    fs::rename(&tmp_trace, trace_path)
        .map_err(|e| Error::io(trace_path.display().to_string(), e))?;
    if let Some((mut w, tmp, final_path)) = truth_writer {
        w.flush().map_err(|e| Error::io("truth", e))?;
        drop(w);
        fs::rename(&tmp, &final_path).map_err(|e| Error::io(final_path.display().to_string(), e))?;
    }
    summary.wraps = wraps;
    Ok(summary)
}

/// Per-application comparison of attributed dynamic energy against truth.
#[derive(Debug, Clone, Default)]
pub struct CompareReport {
    pub rows: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
}

/// Compares attribution records against a ground-truth file. Records must
/// come from a replay of the matching trace in all-jobs mode.
pub fn ground_truth_compare(
    records: &[AttributionRecord],
    truth: &GroundTruth,
) -> Result<CompareReport> {
    // (t0 bits, app_id, socket) -> (cpu_dyn, dram_dyn)
    let mut by_key: BTreeMap<(u64, &str, usize), (f64, f64)> = BTreeMap::new();
    for r in records {
        for sa in &r.per_socket {
            by_key.insert(
                (r.t_start.to_bits(), r.app_id.as_str(), sa.socket.0),
                (
                    sa.cpu.dynamic_attributed().0,
                    sa.dram.dynamic_attributed().0,
                ),
            );
        }
    }
    let mut report = CompareReport::default();
    let mut rel_sum = 0.0f64;
    for row in &truth.rows {
        let Some(label) = &row.label else { continue };
        let pid = truth.header.labels.get(label).ok_or_else(|| {
            Error::Mismatch(format!("truth label {label} missing from header map"))
        })?;
        let app_id = pid.to_string();
        let Some(&(cpu, dram)) = by_key.get(&(row.t0.to_bits(), app_id.as_str(), row.socket))
        else {
            if row.cpu_dyn_j == 0.0 && row.dram_dyn_j == 0.0 {
                continue;
            }
            return Err(Error::Mismatch(format!(
                "no record for label {label} (pid {app_id}) at t0={} socket {}",
                row.t0, row.socket
            )));
        };
        for (got, want) in [(cpu, row.cpu_dyn_j), (dram, row.dram_dyn_j)] {
            let abs = (got - want).abs();
            let rel = if want.abs() > 0.0 {
                abs / want.abs()
            } else if abs > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            report.rows += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            report.max_rel_err = report.max_rel_err.max(rel);
            rel_sum += rel;
        }
    }
    if report.rows > 0 {
        report.mean_rel_err = rel_sum / report.rows as f64;
    }
    Ok(report)
}

/// Desk-scale dual-socket topology mirroring a 2 x 16-logical-core node.
pub fn desk_topology() -> Topology {
    let mut cpu_map = vec![0usize; 16];
    cpu_map.extend(vec![1usize; 16]);
    Topology {
        sockets: 2,
        cpu_map,
        // Synthetic tick rate: fine enough that percent-level utilization
        // schedules quantize to whole ticks per 10 ms frame.
        clk_tck: 10_000,
    }
}

fn base_scenario(name: &str) -> Scenario {
    Scenario {
        name: name.to_string(),
        topology: desk_topology(),
        duration: 60.0,
        frame_period: 0.01,
        static_package_w: vec![50.0, 50.0],
        static_dram_w: vec![5.0, 5.0],
        dyn_cpu_coeff_w: vec![20.0, 20.0],
        dyn_dram_coeff_w: vec![4.0, 4.0],
        mem_per_node_b: vec![32 * GIB, 32 * GIB],
        // Small enough to wrap several times per minute at these powers.
        max_range_uj: 1_000_000_000,
        seed: 1,
        tasks: vec![],
    }
}

fn ramp_steps(duration: f64, socket: usize, sockets: usize) -> Vec<CpuStep> {
    // 0 -> 99% in 1% steps; whole ticks per frame at the desk clk_tck.
    (0..100)
        .map(|k| {
            let mut per_socket = vec![0.0; sockets];
            per_socket[socket] = k as f64 / 100.0;
            CpuStep {
                t: k as f64 * duration / 100.0,
                per_socket,
            }
        })
        .collect()
}

fn constant_cpu(socket: usize, util: f64, sockets: usize) -> Vec<CpuStep> {
    let mut per_socket = vec![0.0; sockets];
    per_socket[socket] = util;
    vec![CpuStep { t: 0.0, per_socket }]
}

fn constant_mem(per_socket: Vec<u64>) -> Vec<MemStep> {
    vec![MemStep { t: 0.0, per_socket }]
}

/// Scenario presets mirroring the microbenchmark suite at desk scale.
pub fn preset(name: &str) -> Result<Scenario> {
    match name {
        "cpu-sweep" => {
            let mut s = base_scenario("cpu-sweep");
            // Equal numbers of processes and threads, one per socket each,
            // sweeping utilization from 0 to 100%.
            s.tasks = vec![
                TaskSpec {
                    label: "proc0".into(),
                    kind: TaskKind::Process,
                    start: 0.0,
                    end: f64::INFINITY,
                    cpu: ramp_steps(s.duration, 0, 2),
                    mem: vec![],
                },
                TaskSpec {
                    label: "proc1".into(),
                    kind: TaskKind::Process,
                    start: 0.0,
                    end: f64::INFINITY,
                    cpu: ramp_steps(s.duration, 1, 2),
                    mem: vec![],
                },
                TaskSpec {
                    label: "threads".into(),
                    kind: TaskKind::Process,
                    start: 0.0,
                    end: f64::INFINITY,
                    cpu: vec![],
                    mem: vec![],
                },
                TaskSpec {
                    label: "threads.t0".into(),
                    kind: TaskKind::ThreadOf("threads".into()),
                    start: 0.0,
                    end: f64::INFINITY,
                    cpu: ramp_steps(s.duration, 0, 2),
                    mem: vec![],
                },
                TaskSpec {
                    label: "threads.t1".into(),
                    kind: TaskKind::ThreadOf("threads".into()),
                    start: 0.0,
                    end: f64::INFINITY,
                    cpu: ramp_steps(s.duration, 1, 2),
                    mem: vec![],
                },
                // Background owner of otherwise-unattributed memory, so the
                // DRAM population is fully covered.
                TaskSpec {
                    label: "system".into(),
                    kind: TaskKind::Process,
                    start: 0.0,
                    end: f64::INFINITY,
                    cpu: vec![],
                    mem: constant_mem(vec![32 * GIB, 32 * GIB]),
                },
            ];
            Ok(s)
        }
        "mem-sweep" => {
            let mut s = base_scenario("mem-sweep");
            let node0 = s.mem_per_node_b[0];
            // 64 steps of 1/64 node: byte counts and node fractions stay
            // exactly representable.
            let step_b = node0 / 64;
            let sweep: Vec<MemStep> = (0..64)
                .map(|k| MemStep {
                    t: k as f64 * s.duration / 64.0,
                    per_socket: vec![k as u64 * step_b, 0],
                })
                .collect();
            let complement: Vec<MemStep> = (0..64)
                .map(|k| MemStep {
                    t: k as f64 * s.duration / 64.0,
                    per_socket: vec![node0 - k as u64 * step_b, 32 * GIB],
                })
                .collect();
            s.tasks = vec![
                TaskSpec {
                    label: "mem".into(),
                    kind: TaskKind::Process,
                    start: 0.0,
                    end: f64::INFINITY,
                    // The map/unmap loop costs a little CPU.
                    cpu: constant_cpu(0, 0.05, 2),
                    mem: sweep,
                },
                TaskSpec {
                    label: "system".into(),
                    kind: TaskKind::Process,
                    start: 0.0,
                    end: f64::INFINITY,
                    cpu: vec![],
                    mem: complement,
                },
            ];
            Ok(s)
        }
        "mix" => Ok(mix_scenario(false)),
        "mix-neighbor" => Ok(mix_scenario(true)),
        other => Err(Error::InvalidArgument(format!(
            "unknown preset {other:?}; valid presets: cpu-sweep, mem-sweep, mix, mix-neighbor"
        ))),
    }
}

fn mix_app(label: &str, sockets: usize) -> Vec<TaskSpec> {
    // One process with a thread per socket, each at 50% CPU, and 50% of
    // each node's memory held by the process.
    vec![
        TaskSpec {
            label: label.to_string(),
            kind: TaskKind::Process,
            start: 0.0,
            end: f64::INFINITY,
            cpu: vec![],
            mem: constant_mem(vec![16 * GIB, 16 * GIB]),
        },
        TaskSpec {
            label: format!("{label}.t0"),
            kind: TaskKind::ThreadOf(label.to_string()),
            start: 0.0,
            end: f64::INFINITY,
            cpu: constant_cpu(0, 0.5, sockets),
            mem: vec![],
        },
        TaskSpec {
            label: format!("{label}.t1"),
            kind: TaskKind::ThreadOf(label.to_string()),
            start: 0.0,
            end: f64::INFINITY,
            cpu: constant_cpu(1, 0.5, sockets),
            mem: vec![],
        },
    ]
}

fn mix_scenario(with_neighbor: bool) -> Scenario {
    let mut s = base_scenario(if with_neighbor { "mix-neighbor" } else { "mix" });
    s.tasks = mix_app("target", 2);
    if with_neighbor {
        s.tasks.extend(mix_app("neighbor", 2));
    } else {
        // Alone, the background owns the other half of each node.
        s.tasks.push(TaskSpec {
            label: "system".into(),
            kind: TaskKind::Process,
            start: 0.0,
            end: f64::INFINITY,
            cpu: vec![],
            mem: constant_mem(vec![16 * GIB, 16 * GIB]),
        });
    }
    s
}

/// Keep `MIB` exported for scenario files written by hand.
pub const MEM_MIB: u64 = MIB;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in ["cpu-sweep", "mem-sweep", "mix", "mix-neighbor"] {
            let s = preset(name).unwrap();
            s.validate().unwrap();
        }
        assert!(preset("bogus").is_err());
    }

    #[test]
    fn mix_has_two_equal_apps_with_neighbor() {
        let s = preset("mix-neighbor").unwrap();
        let apps: Vec<&str> = s
            .tasks
            .iter()
            .filter(|t| matches!(t.kind, TaskKind::Process))
            .map(|t| t.label.as_str())
            .collect();
        assert_eq!(apps, vec!["target", "neighbor"]);
    }

    #[test]
    fn capacity_violation_names_time_and_socket() {
        let mut s = base_scenario("bad");
        s.duration = 1.0;
        s.tasks = vec![TaskSpec {
            label: "hog".into(),
            kind: TaskKind::Process,
            start: 0.0,
            end: f64::INFINITY,
            cpu: vec![CpuStep {
                t: 0.0,
                per_socket: vec![17.0, 0.0],
            }],
            mem: vec![],
        }];
        let dir = std::env::temp_dir().join("numawatt-cap-test");
        std::fs::create_dir_all(&dir).unwrap();
        let err = generate_trace(&s, dir.join("t.jsonl"), None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("socket 0"), "{msg}");
        assert!(msg.contains("t="), "{msg}");
    }

    #[test]
    fn wrap_guard_rejects_tiny_ranges() {
        let mut s = base_scenario("tiny-range");
        s.duration = 1.0;
        s.max_range_uj = 100; // far below one frame of static accrual
        let dir = std::env::temp_dir().join("numawatt-wrap-test");
        std::fs::create_dir_all(&dir).unwrap();
        let err = generate_trace(&s, dir.join("t.jsonl"), None).unwrap_err();
        assert!(err.to_string().contains("ambiguous"));
    }

    #[test]
    fn closed_form_single_task() {
        // 1 task at 50% on socket 0 for 1 s, 40 W coefficient, 10 W static:
        // package total 30 J, task dynamic truth 20 J.
        let mut s = base_scenario("closed-form");
        s.duration = 1.0;
        s.static_package_w = vec![10.0, 10.0];
        s.static_dram_w = vec![0.0, 0.0];
        s.dyn_cpu_coeff_w = vec![40.0, 40.0];
        s.tasks = vec![TaskSpec {
            label: "half".into(),
            kind: TaskKind::Process,
            start: 0.0,
            end: f64::INFINITY,
            cpu: constant_cpu(0, 0.5, 2),
            mem: vec![],
        }];
        let dir = std::env::temp_dir().join("numawatt-closed-form");
        std::fs::create_dir_all(&dir).unwrap();
        let trace = dir.join("t.jsonl");
        let truth_path = dir.join("truth.jsonl");
        generate_trace(&s, &trace, Some(&truth_path)).unwrap();

        let (_, frames) = crate::telemetry::trace::read_all(std::fs::File::open(&trace).unwrap()).unwrap();
        assert_eq!(frames.len(), 101);
        let first = &frames[0];
        let last = frames.last().unwrap();
        let total_uj = crate::telemetry::delta_uj_with_overflow(
            first.rapl[0].uj,
            last.rapl[0].uj,
            s.max_range_uj,
        )
        .unwrap();
        assert_eq!(total_uj, 30_000_000);

        let truth = GroundTruth::load(&truth_path).unwrap();
        let dyn_total: f64 = truth
            .rows
            .iter()
            .filter(|r| r.label.as_deref() == Some("half"))
            .map(|r| r.cpu_dyn_j)
            .sum();
        assert!((dyn_total - 20.0).abs() < 1e-9, "{dyn_total}");
    }

    #[test]
    fn determinism_byte_identical() {
        let s = {
            let mut s = base_scenario("det");
            s.duration = 0.5;
            s.tasks = mix_app("a", 2);
            s
        };
        let dir = std::env::temp_dir().join("numawatt-det");
        std::fs::create_dir_all(&dir).unwrap();
        let (t1, t2) = (dir.join("a.jsonl"), dir.join("b.jsonl"));
        let (g1, g2) = (dir.join("a.truth"), dir.join("b.truth"));
        generate_trace(&s, &t1, Some(&g1)).unwrap();
        generate_trace(&s, &t2, Some(&g2)).unwrap();
        assert_eq!(std::fs::read(&t1).unwrap(), std::fs::read(&t2).unwrap());
        assert_eq!(std::fs::read(&g1).unwrap(), std::fs::read(&g2).unwrap());
    }
}
