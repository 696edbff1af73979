//! Validation by summation: the attributed energies of all jobs on the host,
//! plus the tool's own share, must add up to the measured total per interval
//! and device.

use crate::engine::AttributionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Device {
    Cpu,
    Dram,
}

impl std::fmt::Display for Device {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Device::Cpu => write!(f, "cpu"),
            Device::Dram => write!(f, "dram"),
        }
    }
}

/// Closure check for one interval and device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalClosure {
    pub t_start: f64,
    pub t_end: f64,
    pub device: Device,
    /// Sum of application dynamic shares + static (once per socket) + self.
    pub attributed: f64,
    /// Measured socket totals.
    pub measured: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    /// Residual beyond tolerance, typically missing job coverage.
    pub incomplete: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ClosureReport {
    pub per_interval: Vec<IntervalClosure>,
    pub run_attributed_cpu: f64,
    pub run_measured_cpu: f64,
    pub run_attributed_dram: f64,
    pub run_measured_dram: f64,
    pub max_interval_rel_err: f64,
    pub incomplete_intervals: usize,
}

impl ClosureReport {
    pub fn run_rel_err_cpu(&self) -> f64 {
        rel_err(self.run_attributed_cpu, self.run_measured_cpu)
    }

    pub fn run_rel_err_dram(&self) -> f64 {
        rel_err(self.run_attributed_dram, self.run_measured_dram)
    }
}

fn rel_err(attributed: f64, measured: f64) -> f64 {
    let abs = (attributed - measured).abs();
    if measured.abs() > 0.0 {
        abs / measured.abs()
    } else if abs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Runs the closure check over records that cover all jobs of each interval.
/// Records must be grouped by interval in emission order.
pub fn validate_by_summation(records: &[AttributionRecord], tolerance: f64) -> ClosureReport {
    let mut report = ClosureReport::default();
    let mut idx = 0;
    while idx < records.len() {
        let t_start = records[idx].t_start;
        let mut end = idx;
        while end < records.len() && records[end].t_start == t_start {
            end += 1;
        }
        let group = &records[idx..end];
        idx = end;

        let first = &group[0];
        for device in [Device::Cpu, Device::Dram] {
            let share = |r: &AttributionRecord, s: usize| match device {
                Device::Cpu => r.per_socket[s].cpu,
                Device::Dram => r.per_socket[s].dram,
            };
            let sockets = first.per_socket.len();
            // Static and measured totals are interval-level; read them once.
            let static_once: f64 = (0..sockets).map(|s| share(first, s).static_full.0).sum();
            let measured: f64 = (0..sockets).map(|s| share(first, s).measured.0).sum();
            let dynamic: f64 = group
                .iter()
                .flat_map(|r| (0..sockets).map(move |s| share(r, s).dynamic_attributed().0))
                .sum();
            let self_dyn = match device {
                Device::Cpu => first.self_energy.cpu_dynamic.0,
                Device::Dram => first.self_energy.dram_dynamic.0,
            };
            let attributed = dynamic + static_once + self_dyn;
            let abs = (attributed - measured).abs();
            let rel = rel_err(attributed, measured);
            let incomplete = rel > tolerance;
            if incomplete {
                report.incomplete_intervals += 1;
            }
            report.max_interval_rel_err = report.max_interval_rel_err.max(rel);
            match device {
                Device::Cpu => {
                    report.run_attributed_cpu += attributed;
                    report.run_measured_cpu += measured;
                }
                Device::Dram => {
                    report.run_attributed_dram += attributed;
                    report.run_measured_dram += measured;
                }
            }
            report.per_interval.push(IntervalClosure {
                t_start,
                t_end: first.t_end,
                device,
                attributed,
                measured,
                abs_err: abs,
                rel_err: rel,
                incomplete,
            });
        }
    }
    report
}
