//! Experiments A (utility and traffic versus client count and mode),
//! B (eavesdropper in every round) and C (QBER versus channel noise).
//!
//! A run writes `manifest.json` and a JSON-lines record file; every table is
//! regenerated from those two by [`report::write_tables`].

pub mod config;
pub mod report;
mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    DataConfig, ExperimentConfig, ExperimentKind, MaskingConfig, ModelConfig, Preset, QkdConfig, SweepConfig,
};
pub use report::{Manifest, RoundRecord, SweepRecord, SCHEMA_VERSION};
pub use run::{build_federation, run, run_experiment_a, run_experiment_b, run_experiment_c};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed run output: {0}")]
    Report(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Fl(#[from] crate::fl::FlError),
    #[error(transparent)]
    Qkd(#[from] crate::qkd::QkdError),
    #[error(transparent)]
    Task(#[from] crate::tasks::TaskError),
}

impl ExperimentError {
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ExperimentError::Io { path: path.into(), source }
    }
}
