//! Thin command-line front end; all behavior lives in `numawatt::commands`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use numawatt::commands::{
    cmd_attribute, cmd_calibrate, cmd_fit, cmd_replay, cmd_report, cmd_simulate, cmd_validate,
    AttributeOptions, CalibrateOptions, ReplayOptions, ReportOptions, SimulateOptions,
    ValidateOptions,
};
use numawatt::db::{GroupBy, ReportFormat};
use numawatt::engine::Targets;
use numawatt::model::{ModelParams, StaticMode};

#[derive(Parser)]
#[command(
    name = "numawatt",
    about = "Thread-level, NUMA-aware energy attribution for CPU and DRAM",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StaticModeArg {
    Full,
    Apportioned,
    Excluded,
}

impl From<StaticModeArg> for StaticMode {
    fn from(v: StaticModeArg) -> Self {
        match v {
            StaticModeArg::Full => StaticMode::Full,
            StaticModeArg::Apportioned => StaticMode::Apportioned,
            StaticModeArg::Excluded => StaticMode::Excluded,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupByArg {
    App,
    Socket,
    Interval,
}

#[derive(Subcommand)]
enum Command {
    /// Measure per-socket static powers on a quiesced host (or idle trace).
    Calibrate {
        /// Calibration window in seconds.
        #[arg(long)]
        seconds: f64,
        /// Output calibration file.
        #[arg(long)]
        out: PathBuf,
        /// Calibrate from an idle trace instead of live counters.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Sampling period in seconds.
        #[arg(long, default_value_t = 0.01)]
        period: f64,
    },
    /// Attribute live energy to target pids (or every job) for a duration.
    Attribute {
        /// Target root pid; repeatable.
        #[arg(long = "pid")]
        pids: Vec<i32>,
        /// Attribute every top-level process on the host.
        #[arg(long, conflicts_with = "pids")]
        all_jobs: bool,
        #[arg(long)]
        seconds: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Sampling period in seconds.
        #[arg(long, default_value_t = 0.01)]
        period: f64,
        #[arg(long, value_enum, default_value_t = StaticModeArg::Full)]
        static_mode: StaticModeArg,
        /// Calibration file from `calibrate`.
        #[arg(long)]
        calib: Option<PathBuf>,
        /// Accept a calibration whose host fingerprint does not match.
        #[arg(long)]
        force_calib: bool,
        /// Run database directory.
        #[arg(long)]
        db: PathBuf,
        /// Re-pin this process to the least-loaded core each interval.
        #[arg(long)]
        pin_self: bool,
        /// Explicit run id (default: generated).
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Replay a recorded trace through the identical engine path.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long = "pid")]
        pids: Vec<i32>,
        #[arg(long, conflicts_with = "pids")]
        all_jobs: bool,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = StaticModeArg::Full)]
        static_mode: StaticModeArg,
        /// Calibration file; without it all energy is treated as dynamic.
        #[arg(long)]
        calib: Option<PathBuf>,
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Generate a synthetic trace plus exact ground truth.
    Simulate {
        /// Preset name: cpu-sweep, mem-sweep, mix, mix-neighbor.
        #[arg(long)]
        preset: Option<String>,
        /// Scenario JSON file (alternative to --preset).
        #[arg(long, conflicts_with = "preset")]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory for the trace and truth files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a trace against its ground truth: summation closure plus
    /// per-task agreement. Exit status 1 on failed validation.
    Validate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Export one run's records as CSV or JSONL.
    Report {
        #[arg(long)]
        db: PathBuf,
        /// Run id (default: most recent run).
        #[arg(long)]
        run: Option<String>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(long, value_enum, default_value_t = GroupByArg::Interval)]
        group_by: GroupByArg,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the CPU credit exponent from a `utilization,power` sweep CSV.
    Fit {
        #[arg(long)]
        sweep: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result: Result<ExitCode, numawatt::Error> = match cli.command {
        Command::Calibrate {
            seconds,
            out: out_path,
            trace,
            period,
        } => cmd_calibrate(
            &CalibrateOptions {
                seconds,
                out: out_path,
                trace,
                period,
            },
            &mut out,
        )
        .map(|_| ExitCode::SUCCESS),
        Command::Attribute {
            pids,
            all_jobs,
            seconds,
            gamma,
            sigma,
            period,
            static_mode,
            calib,
            force_calib,
            db,
            pin_self,
            run_id,
        } => cmd_attribute(
            &AttributeOptions {
                pids,
                all_jobs,
                seconds,
                params: ModelParams {
                    gamma,
                    sigma,
                    sample_period: period,
                    ..ModelParams::default()
                },
                static_mode: static_mode.into(),
                calib,
                force_calib,
                db,
                pin_self,
                run_id,
            },
            &mut out,
        )
        // Exit 2 flags a run that ended early (target exited mid-window).
        .map(|o| {
            if o.summary.partial {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }),
        Command::Replay {
            trace,
            pids,
            all_jobs,
            gamma,
            sigma,
            static_mode,
            calib,
            db,
            run_id,
        } => cmd_replay(
            &ReplayOptions {
                trace,
                params: ModelParams {
                    gamma,
                    sigma,
                    ..ModelParams::default()
                },
                targets: if all_jobs || pids.is_empty() {
                    Targets::AllJobs
                } else {
                    Targets::Pids(pids)
                },
                static_mode: static_mode.into(),
                calib,
                db,
                run_id,
            },
            &mut out,
        )
        .map(|_| ExitCode::SUCCESS),
        Command::Simulate {
            preset,
            scenario,
            seed,
            out: out_dir,
        } => cmd_simulate(
            &SimulateOptions {
                preset,
                scenario,
                seed,
                out_dir,
            },
            &mut out,
        )
        .map(|_| ExitCode::SUCCESS),
        Command::Validate {
            trace,
            truth,
            gamma,
            sigma,
            tolerance,
        } => cmd_validate(
            &ValidateOptions {
                trace,
                truth,
                gamma,
                sigma,
                tolerance,
            },
            &mut out,
        )
        .map(|o| {
            if o.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }),
        Command::Report {
            db,
            run,
            format,
            group_by,
            out: out_path,
        } => cmd_report(
            &ReportOptions {
                db,
                run_id: run,
                format: match format {
                    FormatArg::Csv => ReportFormat::Csv,
                    FormatArg::Jsonl => ReportFormat::Jsonl,
                },
                group_by: match group_by {
                    GroupByArg::App => GroupBy::App,
                    GroupByArg::Socket => GroupBy::Socket,
                    GroupByArg::Interval => GroupBy::Interval,
                },
                out: out_path,
            },
            &mut out,
        )
        .map(|_| ExitCode::SUCCESS),
        Command::Fit { sweep } => cmd_fit(&sweep, &mut out).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
