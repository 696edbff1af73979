//! Run database: an append-only directory of runs, each holding a manifest
//! and a JSONL record file, plus calibration persistence and report export.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::AttributionRecord;
use crate::error::{Error, Result};
use crate::telemetry::Topology;

pub const RECORD_VERSION: u32 = 1;

/// One exported record row; the on-disk schema. Unknown future fields are
/// ignored on read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub run_id: String,
    pub t0: f64,
    pub t1: f64,
    pub app: String,
    pub socket: usize,
    /// "cpu" or "dram".
    pub device: String,
    pub delta_j: f64,
    pub credit: f64,
    pub static_j: f64,
    pub total_j: f64,
    /// The tool's own dynamic energy over this interval and device
    /// (interval-level; repeated on each socket row of the interval).
    pub self_j: f64,
    pub coarse_j: f64,
    pub warnings: String,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "run_id", "t0", "t1", "app", "socket", "device", "delta_j", "credit", "static_j", "total_j",
    "self_j", "coarse_j", "warnings",
];

impl RecordRow {
    pub fn csv_line(&self) -> String {
        // Floats go through the JSON serializer so the CSV and JSONL exports
        // of the same run agree digit-for-digit.
        let f = |v: f64| serde_json::to_string(&v).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            f(self.t0),
            f(self.t1),
            self.app,
            self.socket,
            self.device,
            f(self.delta_j),
            f(self.credit),
            f(self.static_j),
            f(self.total_j),
            f(self.self_j),
            f(self.coarse_j),
            self.warnings
        )
    }
}

/// Flattens an attribution record to one row per socket and device.
pub fn flatten_record(record: &AttributionRecord, run_id: &str) -> Vec<RecordRow> {
    let warnings = record.diagnostics.warnings();
    let mut rows = Vec::with_capacity(record.per_socket.len() * 2);
    for sa in &record.per_socket {
        for (device, share, self_j, coarse_j) in [
            (
                "cpu",
                &sa.cpu,
                record.self_energy.cpu_dynamic.0,
                record.coarse_cpu.0,
            ),
            (
                "dram",
                &sa.dram,
                record.self_energy.dram_dynamic.0,
                record.coarse_dram.0,
            ),
        ] {
            rows.push(RecordRow {
                run_id: run_id.to_string(),
                t0: record.t_start,
                t1: record.t_end,
                app: record.app_id.clone(),
                socket: sa.socket.0,
                device: device.to_string(),
                delta_j: share.delta.0,
                credit: share.credit.0,
                static_j: share.static_share.0,
                total_j: share.attributed().0,
                self_j,
                coarse_j,
                warnings: warnings.clone(),
            });
        }
    }
    rows
}

/// Metadata for one run, written before the first record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    /// "live", "replay" or "simulate".
    pub mode: String,
    pub gamma: f64,
    pub sigma: f64,
    pub static_mode: String,
    pub topology: Topology,
    pub started_unix: f64,
    #[serde(default)]
    pub finished_unix: Option<f64>,
    pub record_version: u32,
}

pub struct Database {
    root: PathBuf,
}

impl Database {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| Error::io(root.display().to_string(), e))?;
        Ok(Database { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    /// Starts a new run. The run id must be fresh: prior runs are never
    /// touched again.
    pub fn begin_run(&self, manifest: &RunManifest) -> Result<RunWriter> {
        if manifest.run_id.is_empty()
            || manifest
                .run_id
                .chars()
                .any(|c| !(c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.'))
        {
            return Err(Error::Database(format!(
                "run id {:?} must be non-empty and filesystem-safe",
                manifest.run_id
            )));
        }
        let dir = self.run_dir(&manifest.run_id);
        fs::create_dir(&dir).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::Database(format!(
                    "run {} already exists; the database is append-only",
                    manifest.run_id
                ))
            } else {
                Error::io(dir.display().to_string(), e)
            }
        })?;
        // Advisory per-run lock; removed when the run finishes cleanly.
        let lock_path = dir.join(".lock");
        fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
            .map_err(|e| Error::io(lock_path.display().to_string(), e))?;
        let manifest_path = dir.join("manifest.json");
        write_json_file(&manifest_path, manifest)?;
        let records_path = dir.join("records.jsonl");
        let file = fs::OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&records_path)
            .map_err(|e| Error::io(records_path.display().to_string(), e))?;
        Ok(RunWriter {
            dir,
            manifest: manifest.clone(),
            out: BufWriter::new(file),
            rows: 0,
        })
    }

    pub fn list_runs(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        let entries =
            fs::read_dir(&self.root).map_err(|e| Error::io(self.root.display().to_string(), e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(self.root.display().to_string(), e))?;
            if entry.path().join("manifest.json").exists() {
                out.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn load_manifest(&self, run_id: &str) -> Result<RunManifest> {
        read_json_file(&self.run_dir(run_id).join("manifest.json"))
    }

    pub fn load_records(&self, run_id: &str) -> Result<Vec<RecordRow>> {
        let path = self.run_dir(run_id).join("records.jsonl");
        let file = fs::File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut rows = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            rows.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::Database(format!("bad record row: {e}")))?,
            );
        }
        Ok(rows)
    }
}

/// Streaming writer for one run.
pub struct RunWriter {
    dir: PathBuf,
    manifest: RunManifest,
    out: BufWriter<fs::File>,
    rows: usize,
}

impl RunWriter {
    pub fn write_record(&mut self, record: &AttributionRecord) -> Result<()> {
        for row in flatten_record(record, &self.manifest.run_id) {
            serde_json::to_writer(&mut self.out, &row)
                .map_err(|e| Error::Database(e.to_string()))?;
            self.out
                .write_all(b"\n")
                .map_err(|e| Error::io("records.jsonl", e))?;
            self.rows += 1;
        }
        Ok(())
    }

    pub fn rows_written(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self, finished_unix: f64) -> Result<()> {
        self.out.flush().map_err(|e| Error::io("records.jsonl", e))?;
        self.manifest.finished_unix = Some(finished_unix);
        write_json_file(&self.dir.join("manifest.json"), &self.manifest)?;
        let _ = fs::remove_file(self.dir.join(".lock"));
        Ok(())
    }
}

/// Identity of the calibrated host; a calibration from one machine must not
/// be applied to another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostFingerprint {
    pub sockets: usize,
    pub cpu_model: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub fingerprint: HostFingerprint,
    /// Per-socket static powers, watts.
    pub package_w: Vec<f64>,
    pub dram_w: Vec<f64>,
    pub t_static: f64,
    pub samples: usize,
    /// Pooled stddev/mean over per-interval power estimates.
    pub dispersion: f64,
}

impl CalibrationResult {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json_file(path.as_ref(), self)
    }

    /// Loads a calibration and enforces the fingerprint unless `force`.
    pub fn load(
        path: impl AsRef<Path>,
        expected: Option<&HostFingerprint>,
        force: bool,
    ) -> Result<Self> {
        let out: CalibrationResult = read_json_file(path.as_ref())?;
        if let Some(expected) = expected {
            if &out.fingerprint != expected && !force {
                return Err(Error::Mismatch(format!(
                    "calibration was taken on {:?} but this host is {:?}; \
                     pass --force-calib to use it anyway",
                    out.fingerprint, expected
                )));
            }
        }
        Ok(out)
    }
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Database(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Database(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    App,
    Socket,
    Interval,
}

/// Builds the export rows for one run. `Interval` passes rows through;
/// `App`/`Socket` aggregate energies over the other axes (credit becomes the
/// energy-relevant mean share, t0/t1 the covered span) and append one totals
/// row per device plus, for app grouping, a row for the tool's own energy.
pub fn report_rows(rows: &[RecordRow], group_by: GroupBy) -> Vec<RecordRow> {
    match group_by {
        GroupBy::Interval => rows.to_vec(),
        GroupBy::App | GroupBy::Socket => {
            let mut groups: BTreeMap<(String, usize, String), RecordRow> = BTreeMap::new();
            let mut counts: BTreeMap<(String, usize, String), usize> = BTreeMap::new();
            for row in rows {
                let key = match group_by {
                    GroupBy::App => (row.app.clone(), 0, row.device.clone()),
                    GroupBy::Socket => ("all".to_string(), row.socket, row.device.clone()),
                    GroupBy::Interval => unreachable!(),
                };
                let n = counts.entry(key.clone()).or_insert(0);
                *n += 1;
                let agg = groups.entry(key.clone()).or_insert_with(|| RecordRow {
                    run_id: row.run_id.clone(),
                    t0: row.t0,
                    t1: row.t1,
                    app: key.0.clone(),
                    socket: key.1,
                    device: key.2.clone(),
                    delta_j: 0.0,
                    credit: 0.0,
                    static_j: 0.0,
                    total_j: 0.0,
                    self_j: 0.0,
                    coarse_j: 0.0,
                    warnings: String::new(),
                });
                agg.t0 = agg.t0.min(row.t0);
                agg.t1 = agg.t1.max(row.t1);
                agg.delta_j += row.delta_j;
                agg.credit += row.credit;
                agg.static_j += row.static_j;
                agg.total_j += row.total_j;
                agg.coarse_j += row.coarse_j;
                if !row.warnings.is_empty() && !agg.warnings.contains(&row.warnings) {
                    if !agg.warnings.is_empty() {
                        agg.warnings.push(';');
                    }
                    agg.warnings.push_str(&row.warnings);
                }
            }
            let mut out: Vec<RecordRow> = Vec::new();
            for (key, mut agg) in groups {
                let n = counts[&key].max(1);
                agg.credit /= n as f64;
                // Coarse columns repeat per socket row; collapse to one copy.
                if matches!(group_by, GroupBy::App) {
                    let sockets = rows
                        .iter()
                        .map(|r| r.socket)
                        .collect::<std::collections::BTreeSet<_>>()
                        .len()
                        .max(1);
                    agg.coarse_j /= sockets as f64;
                }
                out.push(agg);
            }
            if matches!(group_by, GroupBy::App) {
                out.extend(self_rows(rows));
            }
            out.extend(total_rows(&out, rows));
            out
        }
    }
}

/// One row per device for the tool's own energy, deduplicated by interval.
fn self_rows(rows: &[RecordRow]) -> Vec<RecordRow> {
    let mut by_device: BTreeMap<String, RecordRow> = BTreeMap::new();
    let mut seen: std::collections::HashSet<(u64, String)> = std::collections::HashSet::new();
    for row in rows {
        if !seen.insert((row.t0.to_bits(), row.device.clone())) {
            continue;
        }
        let agg = by_device.entry(row.device.clone()).or_insert_with(|| RecordRow {
            run_id: row.run_id.clone(),
            t0: row.t0,
            t1: row.t1,
            app: "self".to_string(),
            socket: 0,
            device: row.device.clone(),
            delta_j: 0.0,
            credit: 0.0,
            static_j: 0.0,
            total_j: 0.0,
            self_j: 0.0,
            coarse_j: 0.0,
            warnings: String::new(),
        });
        agg.t0 = agg.t0.min(row.t0);
        agg.t1 = agg.t1.max(row.t1);
        agg.self_j += row.self_j;
        agg.total_j += row.self_j;
    }
    by_device.into_values().collect()
}

/// Grand totals per device over the already-aggregated rows.
fn total_rows(aggregated: &[RecordRow], raw: &[RecordRow]) -> Vec<RecordRow> {
    let run_id = raw.first().map(|r| r.run_id.clone()).unwrap_or_default();
    let mut by_device: BTreeMap<String, RecordRow> = BTreeMap::new();
    for row in aggregated {
        let agg = by_device.entry(row.device.clone()).or_insert_with(|| RecordRow {
            run_id: run_id.clone(),
            t0: row.t0,
            t1: row.t1,
            app: "total".to_string(),
            socket: 0,
            device: row.device.clone(),
            delta_j: 0.0,
            credit: 0.0,
            static_j: 0.0,
            total_j: 0.0,
            self_j: 0.0,
            coarse_j: 0.0,
            warnings: String::new(),
        });
        agg.t0 = agg.t0.min(row.t0);
        agg.t1 = agg.t1.max(row.t1);
        agg.delta_j += row.delta_j;
        agg.static_j += row.static_j;
        agg.total_j += row.total_j;
        agg.self_j += row.self_j;
        agg.coarse_j += row.coarse_j;
    }
    by_device.into_values().collect()
}

/// Serializes report rows in the requested format with a stable column order.
pub fn write_report(rows: &[RecordRow], format: ReportFormat, out: &mut dyn Write) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            writeln!(out, "{}", CSV_COLUMNS.join(","))
                .map_err(|e| Error::io("report", e))?;
            for row in rows {
                writeln!(out, "{}", row.csv_line()).map_err(|e| Error::io("report", e))?;
            }
        }
        ReportFormat::Jsonl => {
            for row in rows {
                serde_json::to_writer(&mut *out, row)
                    .map_err(|e| Error::Database(e.to_string()))?;
                out.write_all(b"\n").map_err(|e| Error::io("report", e))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{
        AttributionRecord, DeviceSocketShare, Diagnostics, SelfEnergy, SocketAttribution,
    };
    use crate::model::{EnergyCredit, EnergyJoules, SocketId};

    fn share(delta: f64, credit: f64, stat: f64) -> DeviceSocketShare {
        DeviceSocketShare {
            measured: EnergyJoules(delta + stat),
            delta: EnergyJoules(delta),
            static_full: EnergyJoules(stat),
            credit: EnergyCredit(credit),
            static_share: EnergyJoules(stat),
        }
    }

    fn record(t0: f64, app: &str) -> AttributionRecord {
        AttributionRecord {
            t_start: t0,
            t_end: t0 + 0.01,
            app_id: app.to_string(),
            per_socket: vec![SocketAttribution {
                socket: SocketId(0),
                cpu: share(1.0, 0.5, 0.2),
                dram: share(0.4, 0.25, 0.1),
            }],
            cpu_total: EnergyJoules(0.7),
            dram_total: EnergyJoules(0.2),
            coarse_cpu: EnergyJoules(0.9),
            coarse_dram: EnergyJoules(0.3),
            self_energy: SelfEnergy::default(),
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn flatten_produces_cpu_and_dram_rows() {
        let rows = flatten_record(&record(0.0, "a"), "r1");
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].device, "cpu");
        assert_eq!(rows[1].device, "dram");
        assert_eq!(rows[0].total_j, 1.0 * 0.5 + 0.2);
        assert_eq!(rows[0].run_id, "r1");
    }

    #[test]
    fn database_is_append_only() {
        let dir = tempfile::tempdir().unwrap();
        let db = Database::open(dir.path()).unwrap();
        let manifest = RunManifest {
            run_id: "run-1".into(),
            mode: "replay".into(),
            gamma: 1.0,
            sigma: 1.0,
            static_mode: "full".into(),
            topology: Topology {
                sockets: 1,
                cpu_map: vec![0],
                clk_tck: 100,
            },
            started_unix: 0.0,
            finished_unix: None,
            record_version: RECORD_VERSION,
        };
        let mut w = db.begin_run(&manifest).unwrap();
        w.write_record(&record(0.0, "a")).unwrap();
        w.finish(1.0).unwrap();
        assert_eq!(db.list_runs().unwrap(), vec!["run-1"]);
        assert_eq!(db.load_records("run-1").unwrap().len(), 2);
        // A second run under the same id must be refused.
        assert!(db.begin_run(&manifest).is_err());
    }

    #[test]
    fn record_rows_roundtrip_and_ignore_unknown_fields() {
        let rows = flatten_record(&record(0.0, "a"), "r1");
        let json = serde_json::to_string(&rows[0]).unwrap();
        let back: RecordRow = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rows[0]);
        let with_extra = json.replace('}', ",\"future_field\":42}");
        let back: RecordRow = serde_json::from_str(&with_extra).unwrap();
        assert_eq!(back, rows[0]);
    }

    #[test]
    fn calibration_fingerprint_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calib.json");
        let calib = CalibrationResult {
            fingerprint: HostFingerprint {
                sockets: 2,
                cpu_model: "model-a".into(),
            },
            package_w: vec![50.0, 50.0],
            dram_w: vec![5.0, 5.0],
            t_static: 60.0,
            samples: 6000,
            dispersion: 0.01,
        };
        calib.save(&path).unwrap();
        let same = HostFingerprint {
            sockets: 2,
            cpu_model: "model-a".into(),
        };
        let other = HostFingerprint {
            sockets: 2,
            cpu_model: "model-b".into(),
        };
        assert!(CalibrationResult::load(&path, Some(&same), false).is_ok());
        assert!(CalibrationResult::load(&path, Some(&other), false).is_err());
        assert!(CalibrationResult::load(&path, Some(&other), true).is_ok());
    }

    #[test]
    fn report_group_by_app_has_self_and_total_rows() {
        let mut rows = flatten_record(&record(0.0, "a"), "r1");
        rows.extend(flatten_record(&record(0.0, "b"), "r1"));
        rows.extend(flatten_record(&record(0.01, "a"), "r1"));
        rows.extend(flatten_record(&record(0.01, "b"), "r1"));
        let report = report_rows(&rows, GroupBy::App);
        let apps: Vec<&str> = report.iter().map(|r| r.app.as_str()).collect();
        assert!(apps.contains(&"a"));
        assert!(apps.contains(&"b"));
        assert!(apps.contains(&"self"));
        assert!(apps.contains(&"total"));
        let a_cpu = report
            .iter()
            .find(|r| r.app == "a" && r.device == "cpu")
            .unwrap();
        assert_eq!(a_cpu.total_j, 2.0 * (1.0 * 0.5 + 0.2));
    }

    #[test]
    fn csv_and_jsonl_agree() {
        let rows = flatten_record(&record(0.0, "a"), "r1");
        let mut csv = Vec::new();
        let mut jsonl = Vec::new();
        write_report(&rows, ReportFormat::Csv, &mut csv).unwrap();
        write_report(&rows, ReportFormat::Jsonl, &mut jsonl).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        let jsonl = String::from_utf8(jsonl).unwrap();
        for (csv_line, json_line) in csv.lines().skip(1).zip(jsonl.lines()) {
            let fields: Vec<&str> = csv_line.split(',').collect();
            let value: serde_json::Value = serde_json::from_str(json_line).unwrap();
            for (col, field) in CSV_COLUMNS.iter().zip(&fields) {
                let v = &value[col];
                let as_text = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                assert_eq!(field, &as_text, "column {col}");
            }
        }
    }
}
