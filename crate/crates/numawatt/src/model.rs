//! Pure attribution math: static/dynamic energy split, residence rates,
//! energy credits and per-socket aggregation, plus the coarse socket-blind
//! baseline it improves on. No I/O lives here; everything is a pure function
//! over immutable inputs and safe to call concurrently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a NUMA socket/node on the host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SocketId(pub usize);

/// Non-negative energy amount in joules.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyJoules(pub f64);

/// Non-negative power in watts.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerWatts(pub f64);

/// CPU time (user + kernel) in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CpuSeconds(pub f64);

/// Bytes of private resident memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemBytes(pub u64);

/// Fraction of a socket's dynamic energy attributed to an application, in [0,1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyCredit(pub f64);

/// Per-task residence rates: the fraction of scheduled time (CPU) or private
/// memory (DRAM) located on each socket.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidenceProfile {
    pub cpu_rates: Vec<f64>,
    pub mem_rates: Vec<f64>,
}

/// How the static share of socket energy enters per-application totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StaticMode {
    /// Add each socket's full static energy to every application (the verbatim
    /// per-application equation; meaningful for single-target reporting).
    Full,
    /// Split static energy across applications proportionally to credit, so
    /// summing application totals counts static exactly once.
    Apportioned,
    /// Dynamic energy only.
    Excluded,
}

/// Tunable model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// CPU credit nonlinearity exponent, in (0, 1].
    pub gamma: f64,
    /// DRAM credit nonlinearity exponent, in (0, 1].
    pub sigma: f64,
    /// Sampling period in seconds.
    pub sample_period: f64,
    /// Calibration window in seconds.
    pub static_period: f64,
}

/// Smallest sampling interval the RAPL meter supports.
pub const MIN_SAMPLE_PERIOD: f64 = 0.001;

/// Default sampling period.
pub const DEFAULT_SAMPLE_PERIOD: f64 = 0.01;

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            gamma: 1.0,
            sigma: 1.0,
            sample_period: DEFAULT_SAMPLE_PERIOD,
            static_period: 60.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be in (0, 1], got {}",
                self.sigma
            )));
        }
        if !(self.sample_period >= MIN_SAMPLE_PERIOD) {
            return Err(Error::InvalidArgument(format!(
                "sample period must be >= {} s, got {}",
                MIN_SAMPLE_PERIOD, self.sample_period
            )));
        }
        Ok(())
    }
}

/// One socket's measured energy split over an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocketEnergyBreakdown {
    pub socket: SocketId,
    pub total: EnergyJoules,
    pub static_part: EnergyJoules,
    pub dynamic_delta: EnergyJoules,
}

impl SocketEnergyBreakdown {
    pub fn new(socket: SocketId, total: EnergyJoules, static_part: EnergyJoules) -> Self {
        SocketEnergyBreakdown {
            socket,
            total,
            static_part,
            dynamic_delta: dynamic_delta(total, static_part),
        }
    }
}

/// Result of a credit computation; `ratio_clamped` flags sampling skew where
/// the numerator exceeded the denominator and the ratio was clamped to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CreditOutcome {
    pub credit: EnergyCredit,
    pub ratio_clamped: bool,
}

/// Average static power of a socket domain from a calibration window.
pub fn static_power(calibration_energy: EnergyJoules, t_static: f64) -> Result<PowerWatts> {
    if !(t_static > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "calibration window must be positive, got {t_static} s"
        )));
    }
    if !(calibration_energy.0 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "calibration energy must be non-negative, got {} J",
            calibration_energy.0
        )));
    }
    Ok(PowerWatts(calibration_energy.0 / t_static))
}

/// Static energy consumed over one sampling interval.
pub fn static_energy(p_static: PowerWatts, t_sample: f64) -> Result<EnergyJoules> {
    if !(t_sample > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample interval must be positive, got {t_sample} s"
        )));
    }
    Ok(EnergyJoules(p_static.0 * t_sample))
}

/// Dynamic energy offset: measured total minus static share, clamped at zero.
///
/// Static power is a sampled estimate and may transiently exceed a measured
/// total; callers count clamp events in their diagnostics.
pub fn dynamic_delta(e_total: EnergyJoules, e_static: EnergyJoules) -> EnergyJoules {
    EnergyJoules((e_total.0 - e_static.0).max(0.0))
}

/// CPU residence rates from discretized placement observations.
///
/// Rate for socket `s` = observations on `s` / non-idle observations.
/// An empty or all-idle observation set yields the all-zero vector.
pub fn cpu_residence(
    placements: &[(f64, Option<SocketId>)],
    socket_count: usize,
) -> Vec<f64> {
    let mut counts = vec![0u64; socket_count];
    let mut seen = 0u64;
    for &(_, placement) in placements {
        if let Some(SocketId(s)) = placement {
            if s < socket_count {
                counts[s] += 1;
                seen += 1;
            }
        }
    }
    if seen == 0 {
        return vec![0.0; socket_count];
    }
    counts.iter().map(|&c| c as f64 / seen as f64).collect()
}

/// Expected per-socket CPU time of an application: sum over tasks of
/// residence rate times total CPU time.
pub fn expected_cpu_time(
    tasks: &[(&[f64], CpuSeconds)],
    socket_count: usize,
) -> Vec<CpuSeconds> {
    let mut out = vec![0.0f64; socket_count];
    for (rates, time) in tasks {
        for (s, rate) in rates.iter().enumerate().take(socket_count) {
            out[s] += rate * time.0;
        }
    }
    out.into_iter().map(CpuSeconds).collect()
}

/// CPU energy credit: (T_app / T_total)^gamma.
///
/// A zero denominator yields a zero credit; a ratio above 1 (sampling skew
/// between the two counter sources) clamps to 1 and flags the outcome.
pub fn cpu_credit(t_app: CpuSeconds, t_total: CpuSeconds, gamma: f64) -> CreditOutcome {
    credit_from_ratio(t_app.0, t_total.0, gamma)
}

/// DRAM energy credit: (M_app / M_total)^sigma, with M_total the socket's
/// total available NUMA memory.
pub fn mem_credit(m_app: f64, m_total: f64, sigma: f64) -> CreditOutcome {
    credit_from_ratio(m_app, m_total, sigma)
}

fn credit_from_ratio(num: f64, den: f64, exponent: f64) -> CreditOutcome {
    if den <= 0.0 {
        return CreditOutcome {
            credit: EnergyCredit(0.0),
            ratio_clamped: false,
        };
    }
    let ratio = num / den;
    let clamped = ratio > 1.0;
    let ratio = ratio.clamp(0.0, 1.0);
    CreditOutcome {
        credit: EnergyCredit(ratio.powf(exponent)),
        ratio_clamped: clamped,
    }
}

/// One socket's contribution to an application total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocketShare {
    pub dynamic_delta: EnergyJoules,
    pub credit: EnergyCredit,
    pub static_part: EnergyJoules,
}

/// Application energy aggregated over sockets:
/// sum of dynamic_delta * credit + static_part.
///
/// The caller fills `static_part` according to the active [`StaticMode`];
/// the same aggregation serves CPU and DRAM.
pub fn attribute_device(per_socket: &[SocketShare]) -> EnergyJoules {
    EnergyJoules(
        per_socket
            .iter()
            .map(|s| s.dynamic_delta.0 * s.credit.0 + s.static_part.0)
            .sum(),
    )
}

/// CPU energy attribution over all sockets (see [`attribute_device`]).
pub fn attribute_cpu(per_socket: &[SocketShare]) -> EnergyJoules {
    attribute_device(per_socket)
}

/// DRAM energy attribution over all sockets (see [`attribute_device`]).
pub fn attribute_dram(per_socket: &[SocketShare]) -> EnergyJoules {
    attribute_device(per_socket)
}

/// Memory residence rates for one task from per-socket private-memory samples.
///
/// Each sample is normalized by the task's own total private memory; the
/// returned vector is the mean over non-empty samples. Samples with zero
/// total memory are skipped; if all are zero the result is all-zero.
pub fn mem_residence(mem_samples: &[Vec<MemBytes>], socket_count: usize) -> Vec<f64> {
    let mut acc = vec![0.0f64; socket_count];
    let mut used = 0u64;
    for sample in mem_samples {
        let total: u64 = sample.iter().map(|m| m.0).sum();
        if total == 0 {
            continue;
        }
        used += 1;
        for (s, m) in sample.iter().enumerate().take(socket_count) {
            acc[s] += m.0 as f64 / total as f64;
        }
    }
    if used == 0 {
        return vec![0.0; socket_count];
    }
    acc.into_iter().map(|v| v / used as f64).collect()
}

/// Expected per-socket private memory of an application (processes only;
/// threads share the parent's memory and must not be listed separately).
pub fn expected_mem(tasks: &[(&[f64], MemBytes)], socket_count: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; socket_count];
    for (rates, total) in tasks {
        for (s, rate) in rates.iter().enumerate().take(socket_count) {
            out[s] += rate * total.0 as f64;
        }
    }
    out
}

/// Socket-blind baseline: total energy scaled by the application's share of
/// aggregate resource usage, with no NUMA weighting.
pub fn coarse_attribute(
    e_total_all_sockets: EnergyJoules,
    u_app: f64,
    u_total: f64,
) -> Result<EnergyJoules> {
    if !(u_total > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "total resource usage must be positive, got {u_total}"
        )));
    }
    Ok(EnergyJoules(e_total_all_sockets.0 * (u_app / u_total)))
}
