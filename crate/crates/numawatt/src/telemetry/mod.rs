//! Counter acquisition behind a uniform source abstraction: live Linux
//! readers and a deterministic trace-replay source, plus the parsers and
//! overflow reconstruction they share.

pub mod live;
pub mod overflow;
pub mod stat;
pub mod trace;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CpuSeconds, SocketId};

pub use overflow::{delta_uj_with_overflow, delta_with_overflow};
pub use stat::parse_task_stat;
pub use trace::{TraceReader, TraceWriter, TRACE_VERSION};

/// Identity of one traced OS task (process main thread or kernel thread).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskId {
    pub pid: i32,
    pub tid: i32,
    /// Set for secondary threads; `None` when `tid == pid`.
    pub is_thread_of: Option<i32>,
}

/// RAPL counter domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RaplDomain {
    Package,
    Dram,
}

/// One RAPL counter reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaplReading {
    pub socket: SocketId,
    pub domain: RaplDomain,
    pub uj: u64,
    pub max_uj: u64,
}

/// CPU accounting for one task at one instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCpuReading {
    pub pid: i32,
    pub tid: i32,
    pub ppid: Option<i32>,
    pub utime: u64,
    pub stime: u64,
    /// Logical CPU the task was last scheduled on.
    pub cpu: u32,
    #[serde(skip_serializing, default = "default_state")]
    pub state: char,
}

fn default_state() -> char {
    'R'
}

impl TaskCpuReading {
    pub fn task_id(&self) -> TaskId {
        TaskId {
            pid: self.pid,
            tid: self.tid,
            is_thread_of: if self.tid == self.pid { None } else { Some(self.pid) },
        }
    }

    pub fn total_ticks(&self) -> u64 {
        self.utime + self.stime
    }
}

/// Per-NUMA-node memory statistics; host-wide rows carry `pid = None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumaMemReading {
    pub pid: Option<i32>,
    pub node: SocketId,
    pub private_b: u64,
    pub used_b: u64,
    pub total_b: u64,
}

/// Host topology, read once at startup (or from the trace header).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub sockets: usize,
    /// Logical CPU index -> socket index.
    pub cpu_map: Vec<usize>,
    pub clk_tck: u64,
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        if self.sockets == 0 {
            return Err(Error::InvalidArgument("topology has zero sockets".into()));
        }
        if self.clk_tck == 0 {
            return Err(Error::InvalidArgument("clk_tck must be positive".into()));
        }
        if let Some(&bad) = self.cpu_map.iter().find(|&&s| s >= self.sockets) {
            return Err(Error::InvalidArgument(format!(
                "cpu_map references socket {bad} of {}",
                self.sockets
            )));
        }
        Ok(())
    }

    pub fn socket_of_cpu(&self, cpu: u32) -> Option<SocketId> {
        self.cpu_map.get(cpu as usize).map(|&s| SocketId(s))
    }
}

/// One timestamped snapshot of all sampled counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub ts: f64,
    pub rapl: Vec<RaplReading>,
    /// Aggregate busy (user + kernel) tick counters, one per socket.
    pub host_ticks: Vec<u64>,
    pub tasks: Vec<TaskCpuReading>,
    pub numa: Vec<NumaMemReading>,
    /// Per-logical-CPU busy ticks; only populated by the live source, for
    /// least-loaded-core selection. Never serialized.
    #[serde(skip)]
    pub per_cpu_ticks: Option<Vec<u64>>,
}

impl TelemetryFrame {
    /// Checks the frame invariants against a topology.
    pub fn validate(&self, topology: &Topology) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.rapl {
            if r.socket.0 >= topology.sockets {
                return Err(Error::InvalidTrace(format!(
                    "rapl reading for socket {} of {}",
                    r.socket.0, topology.sockets
                )));
            }
            if r.uj > r.max_uj {
                return Err(Error::InvalidTrace(format!(
                    "rapl counter {} exceeds max range {}",
                    r.uj, r.max_uj
                )));
            }
            if !seen.insert((r.socket, r.domain)) {
                return Err(Error::InvalidTrace(format!(
                    "duplicate rapl reading for socket {} domain {:?}",
                    r.socket.0, r.domain
                )));
            }
        }
        if self.host_ticks.len() != topology.sockets {
            return Err(Error::InvalidTrace(format!(
                "host_ticks has {} entries for {} sockets",
                self.host_ticks.len(),
                topology.sockets
            )));
        }
        let mut task_ids = HashSet::new();
        for t in &self.tasks {
            if !task_ids.insert(t.tid) {
                return Err(Error::InvalidTrace(format!(
                    "task tid {} appears twice in one frame",
                    t.tid
                )));
            }
        }
        for n in &self.numa {
            if n.node.0 >= topology.sockets {
                return Err(Error::InvalidTrace(format!(
                    "numa reading for node {} of {}",
                    n.node.0, topology.sockets
                )));
            }
            if n.pid.is_none() && !(n.private_b <= n.used_b && n.used_b <= n.total_b) {
                return Err(Error::InvalidTrace(format!(
                    "host numa row on node {} violates private <= used <= total",
                    n.node.0
                )));
            }
        }
        Ok(())
    }

    pub fn rapl_reading(&self, socket: SocketId, domain: RaplDomain) -> Option<&RaplReading> {
        self.rapl
            .iter()
            .find(|r| r.socket == socket && r.domain == domain)
    }

    /// Host-wide numa rows, indexed by node.
    pub fn host_numa(&self, socket_count: usize) -> Vec<Option<&NumaMemReading>> {
        let mut out = vec![None; socket_count];
        for n in &self.numa {
            if n.pid.is_none() && n.node.0 < socket_count {
                out[n.node.0] = Some(n);
            }
        }
        out
    }

    /// Private per-node memory of one process, zero-filled.
    pub fn process_numa(&self, pid: i32, socket_count: usize) -> Vec<u64> {
        let mut out = vec![0u64; socket_count];
        for n in &self.numa {
            if n.pid == Some(pid) && n.node.0 < socket_count {
                out[n.node.0] = n.private_b;
            }
        }
        out
    }
}

/// Uniform frame producer: live counters or trace replay.
pub trait TelemetrySource {
    fn topology(&self) -> &Topology;
    /// Next frame, or `None` at end of source.
    fn next_frame(&mut self) -> Result<Option<TelemetryFrame>>;
    /// Whether frames come from a live host (affects self-accounting and
    /// core pinning, which are meaningless in replay).
    fn is_live(&self) -> bool {
        false
    }
}

/// Transitive task tree of `root_pid` within one frame: the root process,
/// descendant processes, and every thread of each. The set is re-evaluated
/// per frame; tasks absent from the next frame are thereby dropped.
pub fn enumerate_tasks(frame: &TelemetryFrame, root_pid: i32) -> Result<Vec<TaskId>> {
    let mut parent: HashMap<i32, Option<i32>> = HashMap::new();
    for t in &frame.tasks {
        if t.tid == t.pid {
            parent.insert(t.pid, t.ppid);
        }
    }
    if !parent.contains_key(&root_pid) {
        return Err(Error::TargetExited(root_pid));
    }
    let mut members: HashSet<i32> = HashSet::new();
    members.insert(root_pid);
    // Child-of-member closure; pid links form a forest so a few passes settle.
    loop {
        let mut grew = false;
        for (&pid, &ppid) in &parent {
            if !members.contains(&pid) {
                if let Some(pp) = ppid {
                    if members.contains(&pp) {
                        members.insert(pid);
                        grew = true;
                    }
                }
            }
        }
        if !grew {
            break;
        }
    }
    Ok(frame
        .tasks
        .iter()
        .filter(|t| members.contains(&t.pid))
        .map(|t| t.task_id())
        .collect())
}

/// Top-level application roots present in a frame: processes whose parent is
/// absent from the frame (or unknown). Kernel-only threads without a
/// userspace parent process are excluded by construction, since threads are
/// grouped under their `pid`.
pub fn enumerate_all_roots(frame: &TelemetryFrame) -> Vec<i32> {
    let processes: HashSet<i32> = frame
        .tasks
        .iter()
        .filter(|t| t.tid == t.pid)
        .map(|t| t.pid)
        .collect();
    let mut roots: Vec<i32> = frame
        .tasks
        .iter()
        .filter(|t| t.tid == t.pid)
        .filter(|t| match t.ppid {
            Some(pp) => !processes.contains(&pp),
            None => true,
        })
        .map(|t| t.pid)
        .collect();
    roots.sort_unstable();
    roots
}

/// Per-socket delta of aggregate busy CPU time between two ordered frames.
pub fn host_cpu_time_per_socket(
    prev: &TelemetryFrame,
    curr: &TelemetryFrame,
    topology: &Topology,
) -> Result<Vec<CpuSeconds>> {
    if prev.host_ticks.len() != topology.sockets || curr.host_ticks.len() != topology.sockets {
        return Err(Error::InvalidTrace(
            "host tick vectors do not match topology".into(),
        ));
    }
    prev.host_ticks
        .iter()
        .zip(&curr.host_ticks)
        .map(|(&p, &c)| {
            if c < p {
                Err(Error::InvalidTrace(format!(
                    "host CPU tick counter regressed from {p} to {c}"
                )))
            } else {
                Ok(CpuSeconds((c - p) as f64 / topology.clk_tck as f64))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo() -> Topology {
        Topology {
            sockets: 2,
            cpu_map: vec![0; 16].into_iter().chain(vec![1; 16]).collect(),
            clk_tck: 100,
        }
    }

    fn frame(ts: f64, host_ticks: Vec<u64>, tasks: Vec<TaskCpuReading>) -> TelemetryFrame {
        TelemetryFrame {
            ts,
            rapl: vec![],
            host_ticks,
            tasks,
            numa: vec![],
            per_cpu_ticks: None,
        }
    }

    fn task(pid: i32, tid: i32, ppid: Option<i32>) -> TaskCpuReading {
        TaskCpuReading {
            pid,
            tid,
            ppid,
            utime: 0,
            stime: 0,
            cpu: 0,
            state: 'R',
        }
    }

    #[test]
    fn host_cpu_time_sums_tick_advances() {
        let t = topo();
        // 16 CPUs each advancing 1 tick at clk_tck=100 -> 0.16 s.
        let prev = frame(0.0, vec![100, 40], vec![]);
        let curr = frame(0.01, vec![116, 40], vec![]);
        let out = host_cpu_time_per_socket(&prev, &curr, &t).unwrap();
        assert!((out[0].0 - 0.16).abs() < 1e-12);
        assert_eq!(out[1].0, 0.0);
    }

    #[test]
    fn host_cpu_time_rejects_regression() {
        let t = topo();
        let prev = frame(0.0, vec![100, 40], vec![]);
        let curr = frame(0.01, vec![90, 40], vec![]);
        assert!(host_cpu_time_per_socket(&prev, &curr, &t).is_err());
    }

    #[test]
    fn task_tree_enumeration() {
        // Root with 2 child processes x 4 extra threads each -> 11 tasks.
        let mut tasks = vec![task(10, 10, Some(1))];
        for child in [20, 30] {
            tasks.push(task(child, child, Some(10)));
            for k in 1..=4 {
                tasks.push(task(child, child + k, Some(10)));
            }
        }
        // An unrelated process must be excluded.
        tasks.push(task(99, 99, Some(1)));
        let f = frame(0.0, vec![0, 0], tasks);
        let ids = enumerate_tasks(&f, 10).unwrap();
        assert_eq!(ids.len(), 11);
        assert!(ids.iter().all(|t| [10, 20, 30].contains(&t.pid)));

        let single = frame(0.0, vec![0, 0], vec![task(5, 5, Some(1))]);
        let ids = enumerate_tasks(&single, 5).unwrap();
        assert_eq!(ids.len(), 1);
        assert_eq!(ids[0].tid, 5);
        assert_eq!(ids[0].is_thread_of, None);

        assert!(matches!(
            enumerate_tasks(&single, 404),
            Err(Error::TargetExited(404))
        ));
    }

    #[test]
    fn all_roots_excludes_children() {
        let f = frame(
            0.0,
            vec![0, 0],
            vec![
                task(10, 10, None),
                task(20, 20, Some(10)),
                task(30, 30, Some(2)),
                task(30, 31, Some(2)),
            ],
        );
        assert_eq!(enumerate_all_roots(&f), vec![10, 30]);
    }

    #[test]
    fn frame_validation_catches_duplicates() {
        let t = topo();
        let mut f = frame(0.0, vec![0, 0], vec![]);
        f.rapl = vec![
            RaplReading { socket: SocketId(0), domain: RaplDomain::Package, uj: 5, max_uj: 10 },
            RaplReading { socket: SocketId(0), domain: RaplDomain::Package, uj: 6, max_uj: 10 },
        ];
        assert!(f.validate(&t).is_err());
        f.rapl.pop();
        assert!(f.validate(&t).is_ok());
        f.rapl[0].uj = 11;
        assert!(f.validate(&t).is_err());
    }
}
