//! Thread-level, NUMA-aware energy attribution for CPU packages and DRAM.
//!
//! The crate splits each socket's measured energy into a static floor and a
//! dynamic remainder, then divides the dynamic part among applications in
//! proportion to their per-socket CPU residence and per-node memory
//! footprint, raised to configurable contention exponents. Everything that
//! feeds the math arrives through [`telemetry::TelemetrySource`], so the
//! same engine runs against live RAPL/procfs counters or recorded traces.
//!
//! Modules:
//! - [`model`]: the pure attribution math (residence, credits, splits).
//! - [`telemetry`]: live Linux readers, trace replay, counter overflow.
//! - [`engine`]: the sampling/attribution loop and per-interval records.
//! - [`validate`]: closure checking (shares must sum to the measurement).
//! - [`oracle`]: synthetic scenario generator with exact ground truth.
//! - [`db`]: run storage, calibration persistence, and report export.
//! - [`commands`]: the operations behind the `numawatt` binary.

pub mod commands;
pub mod db;
pub mod engine;
pub mod error;
pub mod model;
pub mod oracle;
pub mod telemetry;
pub mod validate;

pub use engine::{
    AttributionRecord, Diagnostics, EngineConfig, RunSummary, StaticPowers, Targets,
};
pub use error::{Error, Result};
pub use model::{EnergyJoules, ModelParams, SocketId, StaticMode};
pub use telemetry::{TelemetryFrame, TelemetrySource, Topology};
