//! Live counter acquisition from RAPL sysfs, procfs and the NUMA sysfs tree.
//!
//! Every path is resolved under a configurable filesystem root so tests can
//! point the reader at a fabricated tree (`NUMAWATT_SYS_ROOT`).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::SocketId;
use crate::telemetry::{
    stat, NumaMemReading, RaplDomain, RaplReading, TaskCpuReading, TelemetryFrame,
    TelemetrySource, Topology,
};

pub const SYS_ROOT_ENV: &str = "NUMAWATT_SYS_ROOT";

const POWERCAP: &str = "sys/class/powercap";
const NODE_DIR: &str = "sys/devices/system/node";

/// Which task trees a live frame carries.
#[derive(Debug, Clone)]
pub enum LiveTargets {
    /// Transitive trees of these root pids (plus any extra pids added later,
    /// e.g. the tool's own process).
    Pids(Vec<i32>),
    /// Every userspace process on the host.
    AllJobs,
}

struct RaplFile {
    socket: SocketId,
    domain: RaplDomain,
    energy_path: PathBuf,
    max_uj: u64,
}

/// Telemetry source backed by the live host.
pub struct LiveSource {
    root: PathBuf,
    topology: Topology,
    rapl: Vec<RaplFile>,
    targets: LiveTargets,
    extra_pids: Vec<i32>,
    started: Instant,
}

pub fn sys_root() -> PathBuf {
    std::env::var_os(SYS_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("/"))
}

impl LiveSource {
    /// Opens the live source, discovering topology and RAPL files once.
    /// Fails up front when the RAPL interface is missing or unreadable.
    pub fn open(root: impl Into<PathBuf>, targets: LiveTargets) -> Result<Self> {
        let root = root.into();
        let topology = discover_topology(&root)?;
        let rapl = discover_rapl(&root, topology.sockets)?;
        Ok(LiveSource {
            root,
            topology,
            rapl,
            targets,
            extra_pids: vec![],
            started: Instant::now(),
        })
    }

    pub fn open_default(targets: LiveTargets) -> Result<Self> {
        Self::open(sys_root(), targets)
    }

    /// Additionally sample these pid trees (used for self-accounting).
    pub fn add_extra_pids(&mut self, pids: impl IntoIterator<Item = i32>) {
        self.extra_pids.extend(pids);
    }

    /// One back-to-back read of all RAPL counters.
    pub fn read_rapl(&self) -> Result<Vec<RaplReading>> {
        self.rapl
            .iter()
            .map(|r| {
                Ok(RaplReading {
                    socket: r.socket,
                    domain: r.domain,
                    uj: read_u64(&r.energy_path)?,
                    max_uj: r.max_uj,
                })
            })
            .collect()
    }

    /// One coherent frame: all counters read back-to-back, timestamped at
    /// the first read.
    pub fn read_frame(&self) -> Result<TelemetryFrame> {
        let ts = self.started.elapsed().as_secs_f64();
        let rapl = self.read_rapl()?;
        let (host_ticks, per_cpu_ticks) = self.read_host_ticks()?;
        let root_pids = self.resolve_roots()?;
        let mut tasks = Vec::new();
        let mut numa = self.read_host_numa()?;
        for pid in &root_pids {
            self.collect_tree(*pid, &mut tasks, &mut numa);
        }
        Ok(TelemetryFrame {
            ts,
            rapl,
            host_ticks,
            tasks,
            numa,
            per_cpu_ticks: Some(per_cpu_ticks),
        })
    }

    fn resolve_roots(&self) -> Result<Vec<i32>> {
        let mut roots: BTreeSet<i32> = match &self.targets {
            LiveTargets::Pids(pids) => {
                for &pid in pids {
                    if !self.root.join(format!("proc/{pid}")).is_dir() {
                        return Err(Error::TargetExited(pid));
                    }
                }
                pids.iter().copied().collect()
            }
            LiveTargets::AllJobs => self.all_userspace_roots()?,
        };
        for &pid in &self.extra_pids {
            if self.root.join(format!("proc/{pid}")).is_dir() {
                roots.insert(pid);
            }
        }
        Ok(roots.into_iter().collect())
    }

    /// Top-level userspace processes: ppid 0/1/2 trees collapse so that
    /// kernel threads (children of pid 2) are skipped entirely.
    fn all_userspace_roots(&self) -> Result<BTreeSet<i32>> {
        let mut out = BTreeSet::new();
        for pid in list_numeric(&self.root.join("proc")) {
            if pid == 2 {
                continue;
            }
            let stat_path = self.root.join(format!("proc/{pid}/stat"));
            let Ok(raw) = fs::read_to_string(&stat_path) else {
                continue; // vanished between enumeration and read
            };
            let Ok(parsed) = stat::parse_task_stat(&raw, &format!("pid {pid}")) else {
                continue;
            };
            if parsed.ppid == 2 {
                continue;
            }
            if parsed.ppid == 0 || parsed.ppid == 1 || !self.root.join(format!("proc/{}", parsed.ppid)).is_dir() {
                out.insert(pid);
            }
        }
        Ok(out)
    }

    /// Walks the task tree below `pid`, appending readings. Races with task
    /// death are skips, not failures.
    fn collect_tree(&self, pid: i32, tasks: &mut Vec<TaskCpuReading>, numa: &mut Vec<NumaMemReading>) {
        let task_dir = self.root.join(format!("proc/{pid}/task"));
        for tid in list_numeric(&task_dir) {
            let stat_path = task_dir.join(format!("{tid}/stat"));
            let Ok(raw) = fs::read_to_string(&stat_path) else {
                continue;
            };
            let Ok(parsed) = stat::parse_task_stat(&raw, &format!("task {tid}")) else {
                continue;
            };
            tasks.push(TaskCpuReading {
                pid,
                tid,
                ppid: Some(parsed.ppid),
                utime: parsed.utime_ticks,
                stime: parsed.stime_ticks,
                cpu: parsed.processor,
                state: parsed.state,
            });
            // Child processes are reachable through each thread's children list.
            if let Ok(children) = fs::read_to_string(task_dir.join(format!("{tid}/children"))) {
                for child in children.split_ascii_whitespace() {
                    if let Ok(child_pid) = child.parse::<i32>() {
                        self.collect_tree(child_pid, tasks, numa);
                    }
                }
            }
        }
        if let Ok(private) = self.read_process_numa(pid) {
            for (node, bytes) in private.into_iter().enumerate() {
                numa.push(NumaMemReading {
                    pid: Some(pid),
                    node: SocketId(node),
                    private_b: bytes,
                    used_b: bytes,
                    total_b: 0,
                });
            }
        }
    }

    fn read_host_ticks(&self) -> Result<(Vec<u64>, Vec<u64>)> {
        let path = self.root.join("proc/stat");
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut per_cpu = vec![0u64; self.topology.cpu_map.len()];
        for line in text.lines() {
            let Some(rest) = line.strip_prefix("cpu") else { continue };
            if !rest.starts_with(|c: char| c.is_ascii_digit()) {
                continue; // aggregate "cpu " line
            }
            let mut fields = rest.split_ascii_whitespace();
            let idx: usize = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse("/proc/stat", "bad cpu index"))?;
            let values: Vec<u64> = fields.filter_map(|v| v.parse().ok()).collect();
            if values.len() < 3 {
                return Err(Error::parse("/proc/stat", format!("short cpu line: {line}")));
            }
            // busy = user + nice + system (+ irq + softirq when present)
            let busy: u64 = values.iter().take(3).sum::<u64>()
                + values.get(5).copied().unwrap_or(0)
                + values.get(6).copied().unwrap_or(0);
            if idx < per_cpu.len() {
                per_cpu[idx] = busy;
            }
        }
        let mut per_socket = vec![0u64; self.topology.sockets];
        for (cpu, &busy) in per_cpu.iter().enumerate() {
            per_socket[self.topology.cpu_map[cpu]] += busy;
        }
        Ok((per_socket, per_cpu))
    }

    fn read_host_numa(&self) -> Result<Vec<NumaMemReading>> {
        let mut out = Vec::with_capacity(self.topology.sockets);
        for node in 0..self.topology.sockets {
            let path = self
                .root
                .join(format!("{NODE_DIR}/node{node}/meminfo"));
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            let mut total_kb = None;
            let mut used_kb = None;
            let mut free_kb = None;
            for line in text.lines() {
                let fields: Vec<&str> = line.split_ascii_whitespace().collect();
                // "Node 0 MemTotal: 32768 kB"
                if fields.len() >= 4 {
                    let value: Option<u64> = fields[fields.len() - 2].parse().ok();
                    match fields[2].trim_end_matches(':') {
                        "MemTotal" => total_kb = value,
                        "MemUsed" => used_kb = value,
                        "MemFree" => free_kb = value,
                        _ => {}
                    }
                }
            }
            let total = total_kb
                .ok_or_else(|| Error::parse(path.display().to_string(), "missing MemTotal"))?;
            let used = used_kb
                .or_else(|| free_kb.map(|f| total.saturating_sub(f)))
                .ok_or_else(|| Error::parse(path.display().to_string(), "missing MemUsed/MemFree"))?;
            out.push(NumaMemReading {
                pid: None,
                node: SocketId(node),
                private_b: 0,
                used_b: used * 1024,
                total_b: total * 1024,
            });
        }
        Ok(out)
    }

    /// Private (anonymous) per-node resident memory of one process, from
    /// numa_maps. Shared/file-backed mappings without anonymous pages are
    /// excluded; their ownership is ambiguous.
    fn read_process_numa(&self, pid: i32) -> Result<Vec<u64>> {
        let path = self.root.join(format!("proc/{pid}/numa_maps"));
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut per_node = vec![0u64; self.topology.sockets];
        for line in text.lines() {
            let fields: Vec<&str> = line.split_ascii_whitespace().collect();
            let is_private = fields.iter().any(|f| {
                f.starts_with("anon=") || *f == "heap" || *f == "stack"
            }) && !fields.iter().any(|f| f.starts_with("file="));
            if !is_private {
                continue;
            }
            let page_kb: u64 = fields
                .iter()
                .find_map(|f| f.strip_prefix("kernelpagesize_kB=").and_then(|v| v.parse().ok()))
                .unwrap_or(4);
            for f in &fields {
                if let Some(rest) = f.strip_prefix('N') {
                    if let Some((node, pages)) = rest.split_once('=') {
                        if let (Ok(node), Ok(pages)) = (node.parse::<usize>(), pages.parse::<u64>()) {
                            if node < per_node.len() {
                                per_node[node] += pages * page_kb * 1024;
                            }
                        }
                    }
                }
            }
        }
        Ok(per_node)
    }
}

impl TelemetrySource for LiveSource {
    fn topology(&self) -> &Topology {
        &self.topology
    }

    fn next_frame(&mut self) -> Result<Option<TelemetryFrame>> {
        match self.read_frame() {
            Ok(f) => Ok(Some(f)),
            Err(Error::TargetExited(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn is_live(&self) -> bool {
        true
    }
}

fn list_numeric(dir: &Path) -> Vec<i32> {
    let mut out: Vec<i32> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .filter_map(|e| e.file_name().to_str().and_then(|s| s.parse().ok()))
                .collect()
        })
        .unwrap_or_default();
    out.sort_unstable();
    out
}

fn read_u64(path: &Path) -> Result<u64> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    text.trim()
        .parse()
        .map_err(|_| Error::parse(path.display().to_string(), format!("not an integer: {}", text.trim())))
}

/// Socket topology from the NUMA sysfs tree plus the clock-tick rate.
pub fn discover_topology(root: &Path) -> Result<Topology> {
    let node_root = root.join(NODE_DIR);
    let mut nodes: Vec<usize> = fs::read_dir(&node_root)
        .map_err(|e| Error::io(node_root.display().to_string(), e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|s| s.strip_prefix("node").and_then(|n| n.parse().ok()))
        })
        .collect();
    nodes.sort_unstable();
    if nodes.is_empty() {
        return Err(Error::UnsupportedPlatform(format!(
            "no NUMA nodes under {}",
            node_root.display()
        )));
    }
    let mut cpu_map = Vec::new();
    for &node in &nodes {
        let path = node_root.join(format!("node{node}/cpulist"));
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        for cpu in parse_cpulist(text.trim())? {
            if cpu_map.len() <= cpu {
                cpu_map.resize(cpu + 1, 0);
            }
            cpu_map[cpu] = node;
        }
    }
    Ok(Topology {
        sockets: nodes.len(),
        cpu_map,
        clk_tck: clock_ticks_per_second(),
    })
}

pub fn clock_ticks_per_second() -> u64 {
    let v = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if v > 0 {
        v as u64
    } else {
        100
    }
}

/// Parses a sysfs cpulist such as `0-3,8-11`.
pub fn parse_cpulist(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    if text.is_empty() {
        return Ok(out);
    }
    for part in text.split(',') {
        let part = part.trim();
        if let Some((lo, hi)) = part.split_once('-') {
            let lo: usize = lo
                .parse()
                .map_err(|_| Error::parse("cpulist", format!("bad range start: {part}")))?;
            let hi: usize = hi
                .parse()
                .map_err(|_| Error::parse("cpulist", format!("bad range end: {part}")))?;
            if hi < lo {
                return Err(Error::parse("cpulist", format!("inverted range: {part}")));
            }
            out.extend(lo..=hi);
        } else {
            out.push(
                part.parse()
                    .map_err(|_| Error::parse("cpulist", format!("bad cpu index: {part}")))?,
            );
        }
    }
    Ok(out)
}

/// RAPL package and dram energy files for every socket. A missing interface
/// or unreadable counter is reported up front, naming the path.
fn discover_rapl(root: &Path, sockets: usize) -> Result<Vec<RaplFile>> {
    let base = root.join(POWERCAP);
    if !base.is_dir() {
        return Err(Error::UnsupportedPlatform(format!(
            "RAPL powercap interface not found at {}",
            base.display()
        )));
    }
    let mut out = Vec::new();
    for socket in 0..sockets {
        let pkg_dir = base.join(format!("intel-rapl:{socket}"));
        if !pkg_dir.is_dir() {
            return Err(Error::UnsupportedPlatform(format!(
                "no RAPL domain for socket {socket} at {}",
                pkg_dir.display()
            )));
        }
        out.push(open_domain(&pkg_dir, SocketId(socket), RaplDomain::Package)?);
        // Subdomains: intel-rapl:<s>:<k> with name "dram".
        for k in 0.. {
            let sub = base.join(format!("intel-rapl:{socket}:{k}"));
            if !sub.is_dir() {
                break;
            }
            let name = fs::read_to_string(sub.join("name")).unwrap_or_default();
            if name.trim() == "dram" {
                out.push(open_domain(&sub, SocketId(socket), RaplDomain::Dram)?);
            }
        }
    }
    Ok(out)
}

fn open_domain(dir: &Path, socket: SocketId, domain: RaplDomain) -> Result<RaplFile> {
    let energy_path = dir.join("energy_uj");
    let max_uj = read_u64(&dir.join("max_energy_range_uj"))?;
    // Probe readability now so privilege problems surface at startup.
    read_u64(&energy_path).map_err(|e| {
        Error::UnsupportedPlatform(format!(
            "cannot read RAPL counter {} (check permissions): {e}",
            energy_path.display()
        ))
    })?;
    Ok(RaplFile {
        socket,
        domain,
        energy_path,
        max_uj,
    })
}
