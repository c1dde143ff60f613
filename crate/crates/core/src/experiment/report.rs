//! Record types and the CSV tables derived from them.
//!
//! Every table row starts with `schema_version` and `config_hash`. Column
//! sets change only together with [`SCHEMA_VERSION`].

use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::ExperimentError;
use crate::fl::{Mode, RoundReport, RoundStatus};
use crate::tasks::Task;

pub const SCHEMA_VERSION: u32 = 1;

pub const MANIFEST: &str = "manifest.json";
pub const ROUNDS_JSONL: &str = "rounds.jsonl";
pub const SWEEP_JSONL: &str = "sweep.jsonl";
pub const SUMMARY_JSON: &str = "summary.json";
pub const ROUNDS_CSV: &str = "rounds.csv";
pub const UTILITY_CSV: &str = "utility.csv";
pub const THREAT_CSV: &str = "threat_summary.csv";
pub const LEAKAGE_CSV: &str = "leakage.csv";
pub const SWEEP_CSV: &str = "qber_sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub experiment: ExperimentKind,
    pub task: Task,
    pub config_hash: String,
    /// File name of the JSON-lines records, relative to the run directory.
    pub records: String,
    pub model_params: Option<usize>,
    pub config: ExperimentConfig,
}

/// One federated round with its coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub config_hash: String,
    pub experiment: ExperimentKind,
    pub task: Task,
    pub scenario: String,
    #[serde(flatten)]
    pub report: RoundReport,
}

/// Session statistics at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub schema_version: u32,
    pub config_hash: String,
    pub task: Task,
    pub eta: f64,
    pub eve: bool,
    pub sessions: usize,
    pub qber_threshold: f64,
    /// Total sifted errors over total sifted bits.
    pub pooled_qber: f64,
    pub mean_qber: f64,
    pub qber_std_err: f64,
    pub min_qber: f64,
    pub max_qber: f64,
    pub mean_sifted_len: f64,
    pub abort_count: usize,
    /// Fraction of sessions with QBER at or above the threshold.
    pub abort_rate: f64,
}

impl SweepRecord {
    /// `sessions` holds (sifted errors, sifted length, QBER) per session.
    pub fn from_sessions(hash: &str, cfg: &ExperimentConfig, eta: f64, sessions: &[(usize, usize, f64)]) -> Self {
        let n = sessions.len() as f64;
        let errors: usize = sessions.iter().map(|s| s.0).sum();
        let sifted: usize = sessions.iter().map(|s| s.1).sum();
        let mean = sessions.iter().map(|s| s.2).sum::<f64>() / n;
        let var = if sessions.len() > 1 {
            sessions.iter().map(|s| (s.2 - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let abort_count = sessions.iter().filter(|s| s.2 >= cfg.qber_threshold).count();
        SweepRecord {
            schema_version: SCHEMA_VERSION,
            config_hash: hash.to_string(),
            task: cfg.task,
            eta,
            eve: cfg.eve,
            sessions: sessions.len(),
            qber_threshold: cfg.qber_threshold,
            pooled_qber: errors as f64 / sifted as f64,
            mean_qber: mean,
            qber_std_err: (var / n).sqrt(),
            min_qber: sessions.iter().map(|s| s.2).fold(f64::INFINITY, f64::min),
            max_qber: sessions.iter().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max),
            mean_sifted_len: sifted as f64 / n,
            abort_count,
            abort_rate: abort_count as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub schema_version: u32,
    pub config_hash: String,
    pub experiment: ExperimentKind,
    pub task: Task,
    pub scenario: String,
    pub clients: usize,
    pub mode: Mode,
    pub eve: bool,
    pub round: u64,
    pub status: RoundStatus,
    pub qber: Option<f64>,
    pub sifted_len: Option<usize>,
    pub final_len: Option<usize>,
    pub nmse: Option<f64>,
    pub accuracy: Option<f64>,
    pub miou: Option<f64>,
    pub recon_error: Option<f64>,
    pub leakage_cosine: Option<f64>,
    pub leakage_pearson: Option<f64>,
    pub bytes_down: u64,
    pub bytes_up: u64,
}

/// Final utility and traffic of one (K, mode) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub schema_version: u32,
    pub config_hash: String,
    pub experiment: ExperimentKind,
    pub task: Task,
    pub scenario: String,
    pub clients: usize,
    pub mode: Mode,
    pub eve: bool,
    pub rounds: usize,
    pub secure_rounds: usize,
    pub aborted_rounds: usize,
    pub nmse: Option<f64>,
    pub accuracy: Option<f64>,
    pub miou: Option<f64>,
    /// Per-round traffic of a completed round.
    pub bytes_down: u64,
    pub bytes_up: u64,
    pub total_bytes_down: u64,
    pub total_bytes_up: u64,
    pub max_recon_error: Option<f64>,
    pub mean_qber: Option<f64>,
}

/// Round outcome counts of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreatRow {
    pub schema_version: u32,
    pub config_hash: String,
    pub experiment: ExperimentKind,
    pub task: Task,
    pub scenario: String,
    pub clients: usize,
    pub mode: Mode,
    pub eve: bool,
    pub rounds: usize,
    pub secure: usize,
    pub aborted: usize,
    /// Aborted rounds later retried successfully; rounds are never retried.
    pub recovered: usize,
    pub mean_qber: Option<f64>,
    pub min_qber: Option<f64>,
    pub max_qber: Option<f64>,
    pub nmse: Option<f64>,
    pub accuracy: Option<f64>,
    pub miou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageRow {
    pub schema_version: u32,
    pub config_hash: String,
    pub experiment: ExperimentKind,
    pub task: Task,
    pub scenario: String,
    pub clients: usize,
    pub mode: Mode,
    pub round: u64,
    pub nmse: Option<f64>,
    pub accuracy: Option<f64>,
    pub miou: Option<f64>,
    pub qber: Option<f64>,
    pub mean_cosine: f64,
    pub mean_pearson: f64,
}

pub fn round_rows(records: &[RoundRecord]) -> Vec<RoundRow> {
    records
        .iter()
        .map(|rec| {
            let r = &rec.report;
            RoundRow {
                schema_version: SCHEMA_VERSION,
                config_hash: rec.config_hash.clone(),
                experiment: rec.experiment,
                task: rec.task,
                scenario: rec.scenario.clone(),
                clients: r.num_clients,
                mode: r.mode,
                eve: r.eve_present,
                round: r.round,
                status: r.status,
                qber: r.qber,
                sifted_len: r.sifted_len,
                final_len: r.final_len,
                nmse: r.utility.nmse(),
                accuracy: r.utility.accuracy(),
                miou: r.utility.miou(),
                recon_error: r.recon_error,
                leakage_cosine: r.leakage_mean_cosine,
                leakage_pearson: r.leakage_mean_pearson,
                bytes_down: r.bytes_down,
                bytes_up: r.bytes_up,
            }
        })
        .collect()
}

/// Consecutive records of one (scenario, K, mode, Eve) cell, in first-seen order.
fn cells(records: &[RoundRecord]) -> Vec<&[RoundRecord]> {
    let key = |r: &RoundRecord| (r.scenario.clone(), r.report.num_clients, r.report.mode, r.report.eve_present);
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        if i == records.len() || key(&records[i]) != key(&records[start]) {
            if i > start {
                out.push(&records[start..i]);
            }
            start = i;
        }
    }
    out
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn qbers(cell: &[RoundRecord]) -> Vec<f64> {
    cell.iter().filter_map(|r| r.report.qber).collect()
}

pub fn utility_rows(records: &[RoundRecord]) -> Vec<UtilityRow> {
    cells(records)
        .into_iter()
        .map(|cell| {
            let first = &cell[0];
            let last = &cell[cell.len() - 1].report;
            let secure = cell.iter().filter(|r| r.report.status == RoundStatus::Secure).count();
            let recon: Vec<f64> = cell.iter().filter_map(|r| r.report.recon_error).collect();
            UtilityRow {
                schema_version: SCHEMA_VERSION,
                config_hash: first.config_hash.clone(),
                experiment: first.experiment,
                task: first.task,
                scenario: first.scenario.clone(),
                clients: first.report.num_clients,
                mode: first.report.mode,
                eve: first.report.eve_present,
                rounds: cell.len(),
                secure_rounds: secure,
                aborted_rounds: cell.len() - secure,
                nmse: last.utility.nmse(),
                accuracy: last.utility.accuracy(),
                miou: last.utility.miou(),
                bytes_down: cell.iter().map(|r| r.report.bytes_down).max().unwrap_or(0),
                bytes_up: cell.iter().map(|r| r.report.bytes_up).max().unwrap_or(0),
                total_bytes_down: cell.iter().map(|r| r.report.bytes_down).sum(),
                total_bytes_up: cell.iter().map(|r| r.report.bytes_up).sum(),
                max_recon_error: recon.iter().copied().reduce(f64::max),
                mean_qber: mean(&qbers(cell)),
            }
        })
        .collect()
}

pub fn threat_rows(records: &[RoundRecord]) -> Vec<ThreatRow> {
    cells(records)
        .into_iter()
        .map(|cell| {
            let first = &cell[0];
            let last = &cell[cell.len() - 1].report;
            let secure = cell.iter().filter(|r| r.report.status == RoundStatus::Secure).count();
            let q = qbers(cell);
            ThreatRow {
                schema_version: SCHEMA_VERSION,
                config_hash: first.config_hash.clone(),
                experiment: first.experiment,
                task: first.task,
                scenario: first.scenario.clone(),
                clients: first.report.num_clients,
                mode: first.report.mode,
                eve: first.report.eve_present,
                rounds: cell.len(),
                secure,
                aborted: cell.len() - secure,
                recovered: 0,
                mean_qber: mean(&q),
                min_qber: q.iter().copied().reduce(f64::min),
                max_qber: q.iter().copied().reduce(f64::max),
                nmse: last.utility.nmse(),
                accuracy: last.utility.accuracy(),
                miou: last.utility.miou(),
            }
        })
        .collect()
}

/// Utility, QBER and mean leakage proxies of every SECURE round. Logs a
/// warning and returns an empty table when the run has none.
pub fn report_leakage(records: &[RoundRecord]) -> Vec<LeakageRow> {
    let rows: Vec<LeakageRow> = records
        .iter()
        .filter(|rec| rec.report.status == RoundStatus::Secure)
        .filter_map(|rec| {
            let r = &rec.report;
            Some(LeakageRow {
                schema_version: SCHEMA_VERSION,
                config_hash: rec.config_hash.clone(),
                experiment: rec.experiment,
                task: rec.task,
                scenario: rec.scenario.clone(),
                clients: r.num_clients,
                mode: r.mode,
                round: r.round,
                nmse: r.utility.nmse(),
                accuracy: r.utility.accuracy(),
                miou: r.utility.miou(),
                qber: r.qber,
                mean_cosine: r.leakage_mean_cosine?,
                mean_pearson: r.leakage_mean_pearson?,
            })
        })
        .collect();
    if rows.is_empty() {
        log::warn!("run has no SECURE rounds with leakage proxies; leakage table is empty");
    }
    rows
}

/// Writes `rows` as CSV. Headers come from `header` so that empty tables
/// still carry their schema.
pub fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), ExperimentError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(ExperimentError::from)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| ExperimentError::io(path, e))
}

pub const ROUND_COLUMNS: &[&str] = &[
    "schema_version",
    "config_hash",
    "experiment",
    "task",
    "scenario",
    "clients",
    "mode",
    "eve",
    "round",
    "status",
    "qber",
    "sifted_len",
    "final_len",
    "nmse",
    "accuracy",
    "miou",
    "recon_error",
    "leakage_cosine",
    "leakage_pearson",
    "bytes_down",
    "bytes_up",
];
pub const UTILITY_COLUMNS: &[&str] = &[
    "schema_version",
    "config_hash",
    "experiment",
    "task",
    "scenario",
    "clients",
    "mode",
    "eve",
    "rounds",
    "secure_rounds",
    "aborted_rounds",
    "nmse",
    "accuracy",
    "miou",
    "bytes_down",
    "bytes_up",
    "total_bytes_down",
    "total_bytes_up",
    "max_recon_error",
    "mean_qber",
];
pub const THREAT_COLUMNS: &[&str] = &[
    "schema_version",
    "config_hash",
    "experiment",
    "task",
    "scenario",
    "clients",
    "mode",
    "eve",
    "rounds",
    "secure",
    "aborted",
    "recovered",
    "mean_qber",
    "min_qber",
    "max_qber",
    "nmse",
    "accuracy",
    "miou",
];
pub const LEAKAGE_COLUMNS: &[&str] = &[
    "schema_version",
    "config_hash",
    "experiment",
    "task",
    "scenario",
    "clients",
    "mode",
    "round",
    "nmse",
    "accuracy",
    "miou",
    "qber",
    "mean_cosine",
    "mean_pearson",
];
pub const SWEEP_COLUMNS: &[&str] = &[
    "schema_version",
    "config_hash",
    "task",
    "eta",
    "eve",
    "sessions",
    "qber_threshold",
    "pooled_qber",
    "mean_qber",
    "qber_std_err",
    "min_qber",
    "max_qber",
    "mean_sifted_len",
    "abort_count",
    "abort_rate",
];

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, ExperimentError> {
    let file = std::fs::File::open(path).map_err(|e| ExperimentError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ExperimentError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| ExperimentError::Report(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(row);
    }
    Ok(out)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, ExperimentError> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| ExperimentError::io(&path, e))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| ExperimentError::Report(format!("{}: {e}", path.display())))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(ExperimentError::Report(format!(
            "schema version {} is not supported (expected {SCHEMA_VERSION})",
            m.schema_version
        )));
    }
    Ok(m)
}

pub fn read_round_records(dir: &Path) -> Result<Vec<RoundRecord>, ExperimentError> {
    read_jsonl(&dir.join(ROUNDS_JSONL))
}

pub fn read_sweep_records(dir: &Path) -> Result<Vec<SweepRecord>, ExperimentError> {
    read_jsonl(&dir.join(SWEEP_JSONL))
}

#[derive(Serialize)]
struct Summary<T> {
    schema_version: u32,
    config_hash: String,
    experiment: ExperimentKind,
    task: Task,
    rows: Vec<T>,
}

/// Regenerates `summary.json` and every CSV table of a run directory from its
/// manifest and records. Returns the paths written.
pub fn write_tables(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let m = read_manifest(dir)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, header: &[&str], rows: &dyn ErasedRows| -> Result<(), ExperimentError> {
        let path = dir.join(name);
        rows.write(&path, header)?;
        written.push(path);
        Ok(())
    };
    let summary = match m.experiment {
        ExperimentKind::A | ExperimentKind::B => {
            let records = read_round_records(dir)?;
            if let Some(bad) = records.iter().find(|r| r.config_hash != m.config_hash) {
                return Err(ExperimentError::Report(format!(
                    "record hash {} does not match manifest {}",
                    bad.config_hash, m.config_hash
                )));
            }
            emit(ROUNDS_CSV, ROUND_COLUMNS, &round_rows(&records))?;
            let summary = if m.experiment == ExperimentKind::A {
                let rows = utility_rows(&records);
                emit(UTILITY_CSV, UTILITY_COLUMNS, &rows)?;
                summary_json(&m, rows)?
            } else {
                let rows = threat_rows(&records);
                emit(THREAT_CSV, THREAT_COLUMNS, &rows)?;
                summary_json(&m, rows)?
            };
            emit(LEAKAGE_CSV, LEAKAGE_COLUMNS, &report_leakage(&records))?;
            summary
        }
        ExperimentKind::C => {
            let records = read_sweep_records(dir)?;
            emit(SWEEP_CSV, SWEEP_COLUMNS, &records)?;
            summary_json(&m, records)?
        }
    };
    let path = dir.join(SUMMARY_JSON);
    std::fs::write(&path, summary).map_err(|e| ExperimentError::io(&path, e))?;
    written.push(path);
    Ok(written)
}

trait ErasedRows {
    fn write(&self, path: &Path, header: &[&str]) -> Result<(), ExperimentError>;
}

impl<T: Serialize> ErasedRows for Vec<T> {
    fn write(&self, path: &Path, header: &[&str]) -> Result<(), ExperimentError> {
        write_csv(path, header, self)
    }
}

fn summary_json<T: Serialize>(m: &Manifest, rows: Vec<T>) -> Result<String, ExperimentError> {
    let s = Summary {
        schema_version: SCHEMA_VERSION,
        config_hash: m.config_hash.clone(),
        experiment: m.experiment,
        task: m.task,
        rows,
    };
    Ok(serde_json::to_string_pretty(&s)? + "\n")
}
