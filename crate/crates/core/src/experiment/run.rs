//! Experiment drivers.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{self, Manifest, RoundRecord, SweepRecord, SCHEMA_VERSION};
use super::ExperimentError;
use crate::fl::{self, Federation, Mode, RoundConfig};
use crate::qkd::{run_bb84, Bb84Config};
use crate::rng::child_seed;
use crate::tasks::data::{gen_channel_dataset, gen_radar_dataset};
use crate::tasks::{Dataset, ModelSpec};

fn missing(path: &str) -> ExperimentError {
    ExperimentError::Config { path: path.into(), msg: "section is required".into() }
}

/// Generates the training and validation data and splits the training set
/// across `k` clients. Data depend only on the seed, so every mode and client
/// count sees the same samples.
pub fn build_federation(cfg: &ExperimentConfig, k: usize) -> Result<Federation, ExperimentError> {
    let spec = cfg.model_spec().ok_or_else(|| missing("model"))?;
    let data = cfg.data.as_ref().ok_or_else(|| missing("data"))?;
    let (train, validation) = match &spec {
        ModelSpec::Channel(c) => {
            let dims = (c.height, c.width);
            let n_snr = data.snr_db.len();
            let mut train = Vec::with_capacity(data.train_samples);
            for (i, &snr) in data.snr_db.iter().enumerate() {
                let n = data.train_samples / n_snr + usize::from(i < data.train_samples % n_snr);
                train.extend(gen_channel_dataset(n, snr, dims, child_seed(cfg.seed, "train-data", &[i as u64])));
            }
            let val_snr = data.val_snr_db.ok_or_else(|| missing("data.val_snr_db"))?;
            let val = gen_channel_dataset(data.val_samples, val_snr, dims, child_seed(cfg.seed, "val-data", &[]));
            (Dataset::Channel(train), Dataset::Channel(val))
        }
        ModelSpec::Radar(r) => (
            Dataset::Radar(gen_radar_dataset(data.train_samples, r.size, child_seed(cfg.seed, "train-data", &[0]))),
            Dataset::Radar(gen_radar_dataset(data.val_samples, r.size, child_seed(cfg.seed, "val-data", &[]))),
        ),
    };
    let skew = data.skew.unwrap_or(f64::INFINITY);
    let shards = fl::partition_non_iid(&train, k, skew, child_seed(cfg.seed, "partition", &[k as u64]))?;
    Ok(Federation { model: spec, shards, validation })
}

fn template(cfg: &ExperimentConfig, k: usize, mode: Mode, eve: bool) -> Result<RoundConfig, ExperimentError> {
    Ok(RoundConfig {
        round_index: 0,
        num_clients: k,
        mode,
        train: cfg.training.clone().ok_or_else(|| missing("training"))?,
        qber_threshold: cfg.qber_threshold,
        bb84: Bb84Config {
            raw_len: cfg.qkd.raw_len,
            pa_ratio: cfg.qkd.pa_ratio,
            depolarize_prob: cfg.qkd.depolarize_prob,
            eve_present: eve,
            rng_seed: 0,
        },
        mask_scale: cfg.masking.gamma,
        key_bits: cfg.masking.key_bits,
        // shared by all modes at a given K so that they start from the same seeds
        seed: child_seed(cfg.seed, "federation", &[k as u64]),
    })
}

struct Cell {
    k: usize,
    mode: Mode,
    eve: bool,
    scenario: &'static str,
}

fn run_cells(cfg: &ExperimentConfig, cells: &[Cell]) -> Result<Vec<RoundRecord>, ExperimentError> {
    let hash = cfg.hash();
    let mut ks: Vec<usize> = cells.iter().map(|c| c.k).collect();
    ks.dedup();
    let feds: Vec<(usize, Federation)> =
        ks.iter().map(|&k| build_federation(cfg, k).map(|f| (k, f))).collect::<Result<_, _>>()?;
    let results: Vec<Result<Vec<RoundRecord>, ExperimentError>> = cells
        .par_iter()
        .map(|cell| {
            let fed = &feds.iter().find(|(k, _)| *k == cell.k).expect("federation built").1;
            let tpl = template(cfg, cell.k, cell.mode, cell.eve)?;
            log::info!("{} K={} mode={} eve={}", cell.scenario, cell.k, cell.mode.as_str(), cell.eve);
            let (_, reports) = fl::run_training(fed, &fed.model.init_params(), cfg.rounds, &tpl)?;
            Ok(reports
                .into_iter()
                .map(|report| RoundRecord {
                    config_hash: hash.clone(),
                    experiment: cfg.experiment,
                    task: cfg.task,
                    scenario: cell.scenario.to_string(),
                    report,
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Every (K, mode) cell for `cfg.rounds` rounds.
pub fn run_experiment_a(cfg: &ExperimentConfig) -> Result<Vec<RoundRecord>, ExperimentError> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &k in &cfg.clients {
        for &mode in &cfg.modes {
            cells.push(Cell { k, mode, eve: cfg.eve, scenario: mode.as_str() });
        }
    }
    run_cells(cfg, &cells)
}

/// Each listed mode without Eve ("baseline"), plus QKD-secured aggregation
/// with Eve on the quantum channel in every round ("eve") when `cfg.eve`.
pub fn run_experiment_b(cfg: &ExperimentConfig) -> Result<Vec<RoundRecord>, ExperimentError> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &k in &cfg.clients {
        for &mode in &cfg.modes {
            cells.push(Cell { k, mode, eve: false, scenario: "baseline" });
        }
        if cfg.eve {
            cells.push(Cell { k, mode: Mode::QkdSa, eve: true, scenario: "eve" });
        }
    }
    run_cells(cfg, &cells)
}

/// `sweep.sessions` independent BB84 sessions at every noise level.
pub fn run_experiment_c(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>, ExperimentError> {
    cfg.validate()?;
    let sweep = cfg.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
    let hash = cfg.hash();
    let mut rows = Vec::with_capacity(sweep.etas.len());
    for (i, &eta) in sweep.etas.iter().enumerate() {
        let sessions = (0..sweep.sessions as u64)
            .into_par_iter()
            .map(|s| {
                run_bb84(&Bb84Config {
                    raw_len: cfg.qkd.raw_len,
                    pa_ratio: cfg.qkd.pa_ratio,
                    depolarize_prob: eta,
                    eve_present: cfg.eve,
                    rng_seed: child_seed(cfg.seed, "noise-sweep", &[i as u64, s]),
                })
                .map(|q| (q.sifted_errors, q.sifted_len, q.qber))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(SweepRecord::from_sessions(&hash, cfg, eta, &sessions));
    }
    Ok(rows)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), ExperimentError> {
    let file = std::fs::File::create(path).map_err(|e| ExperimentError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| ExperimentError::io(path, e))?;
    }
    w.flush().map_err(|e| ExperimentError::io(path, e))
}

/// Runs the configured experiment, writes the manifest and records into
/// `out_dir`, then derives all tables. Returns the table paths.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<std::path::PathBuf>, ExperimentError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| ExperimentError::io(out_dir, e))?;
    let records = match cfg.experiment {
        ExperimentKind::A | ExperimentKind::B => {
            let rows =
                if cfg.experiment == ExperimentKind::A { run_experiment_a(cfg)? } else { run_experiment_b(cfg)? };
            write_jsonl(&out_dir.join(report::ROUNDS_JSONL), &rows)?;
            report::ROUNDS_JSONL
        }
        ExperimentKind::C => {
            let rows = run_experiment_c(cfg)?;
            write_jsonl(&out_dir.join(report::SWEEP_JSONL), &rows)?;
            report::SWEEP_JSONL
        }
    };
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: cfg.experiment,
        task: cfg.task,
        config_hash: cfg.hash(),
        records: records.to_string(),
        model_params: cfg.model_spec().map(|m| m.param_count()),
        config: cfg.clone(),
    };
    let path = out_dir.join(report::MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).map_err(|e| ExperimentError::io(&path, e))?;
    report::write_tables(out_dir)
}
