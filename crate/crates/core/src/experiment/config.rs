//! Declarative experiment configuration (TOML).
//!
//! Every value that affects numerics must be written in the file; there are
//! no serde defaults on those fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::fl::Mode;
use crate::qkd::Bb84Config;
use crate::tasks::{ChannelSpec, ModelSpec, RadarSpec, Task, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// Utility and communication versus client count and mode.
    A,
    /// Eavesdropper in every round.
    B,
    /// QBER versus depolarizing noise.
    C,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::A => "A",
            ExperimentKind::B => "B",
            ExperimentKind::C => "C",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Preset,
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_samples: usize,
    pub val_samples: usize,
    /// Channel task: training SNRs, split evenly across the training set.
    #[serde(default)]
    pub snr_db: Vec<f64>,
    /// Validation SNR for the channel task.
    #[serde(default)]
    pub val_snr_db: Option<f64>,
    /// Dirichlet concentration of the client split; absent means balanced.
    #[serde(default)]
    pub skew: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QkdConfig {
    pub raw_len: usize,
    pub pa_ratio: f64,
    pub depolarize_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskingConfig {
    pub gamma: f64,
    pub key_bits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub etas: Vec<f64>,
    pub sessions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub task: Task,
    pub seed: u64,
    pub clients: Vec<usize>,
    pub rounds: usize,
    pub modes: Vec<Mode>,
    pub eve: bool,
    pub qber_threshold: f64,
    pub qkd: QkdConfig,
    pub masking: MaskingConfig,
    pub model: Option<ModelConfig>,
    pub data: Option<DataConfig>,
    pub training: Option<TrainConfig>,
    pub sweep: Option<SweepConfig>,
    /// Where outputs go; not part of the config hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

fn cfg_err(path: &str, msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config { path: path.to_string(), msg: msg.into() }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ExperimentError> {
        toml::from_str(s).map_err(|e| cfg_err("<root>", e.to_string()))
    }

    /// Reads and validates a config file. A relative `output_dir` is resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err("<file>", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(out), Some(parent)) = (&cfg.output_dir, path.parent()) {
            if out.is_relative() {
                cfg.output_dir = Some(parent.join(out));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Lints the config, reporting the first offending field by its path.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.qber_threshold > 0.0 && self.qber_threshold < 1.0) {
            return Err(cfg_err("qber_threshold", "must lie in (0, 1)"));
        }
        let bb84 = Bb84Config {
            raw_len: self.qkd.raw_len,
            pa_ratio: self.qkd.pa_ratio,
            depolarize_prob: self.qkd.depolarize_prob,
            eve_present: self.eve,
            rng_seed: 0,
        };
        bb84.validate().map_err(|e| cfg_err("qkd", e.to_string()))?;
        if !(self.masking.gamma >= 0.0 && self.masking.gamma.is_finite()) {
            return Err(cfg_err("masking.gamma", "must be finite and non-negative"));
        }
        if self.masking.key_bits == 0 {
            return Err(cfg_err("masking.key_bits", "must be positive"));
        }
        match self.experiment {
            ExperimentKind::A | ExperimentKind::B => self.validate_federated(),
            ExperimentKind::C => self.validate_sweep(),
        }
    }

    fn validate_federated(&self) -> Result<(), ExperimentError> {
        if self.clients.is_empty() {
            return Err(cfg_err("clients", "must list at least one client count"));
        }
        if let Some(&k) = self.clients.iter().find(|&&k| k < 2) {
            return Err(cfg_err("clients", format!("client counts must be at least 2, got {k}")));
        }
        if self.rounds == 0 {
            return Err(cfg_err("rounds", "must be at least 1"));
        }
        if self.modes.is_empty() && !(self.experiment == ExperimentKind::B && self.eve) {
            return Err(cfg_err("modes", "must list at least one mode"));
        }
        let model = self.model.as_ref().ok_or_else(|| cfg_err("model", "section is required"))?;
        let spec = self.model_spec_for(model);
        spec.validate().map_err(|e| cfg_err("model", e))?;
        let data = self.data.as_ref().ok_or_else(|| cfg_err("data", "section is required"))?;
        let max_k = *self.clients.iter().max().expect("nonempty");
        if data.train_samples < max_k {
            return Err(cfg_err(
                "data.train_samples",
                format!("{} samples cannot cover {max_k} clients", data.train_samples),
            ));
        }
        if data.val_samples == 0 {
            return Err(cfg_err("data.val_samples", "must be positive"));
        }
        if let Some(skew) = data.skew {
            if skew.is_nan() || skew <= 0.0 {
                return Err(cfg_err("data.skew", "must be positive"));
            }
        }
        if self.task == Task::Channel {
            if data.snr_db.is_empty() {
                return Err(cfg_err("data.snr_db", "channel task needs at least one SNR"));
            }
            if data.val_snr_db.is_none() {
                return Err(cfg_err("data.val_snr_db", "channel task needs a validation SNR"));
            }
        }
        let t = self.training.as_ref().ok_or_else(|| cfg_err("training", "section is required"))?;
        if t.batch_size == 0 {
            return Err(cfg_err("training.batch_size", "must be positive"));
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(cfg_err("training.lr", "must be positive"));
        }
        Ok(())
    }

    fn validate_sweep(&self) -> Result<(), ExperimentError> {
        let sweep = self.sweep.as_ref().ok_or_else(|| cfg_err("sweep", "section is required"))?;
        if sweep.etas.is_empty() {
            return Err(cfg_err("sweep.etas", "must be nonempty"));
        }
        if let Some(e) = sweep.etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(cfg_err("sweep.etas", format!("noise level {e} outside [0, 1]")));
        }
        if sweep.sessions == 0 {
            return Err(cfg_err("sweep.sessions", "must be positive"));
        }
        Ok(())
    }

    fn model_spec_for(&self, m: &ModelConfig) -> ModelSpec {
        match (self.task, m.preset) {
            (Task::Channel, Preset::Desk) => ModelSpec::Channel(ChannelSpec::desk(m.init_seed)),
            (Task::Channel, Preset::Full) => ModelSpec::Channel(ChannelSpec::full(m.init_seed)),
            (Task::Radar, Preset::Desk) => ModelSpec::Radar(RadarSpec::desk(m.init_seed)),
            (Task::Radar, Preset::Full) => ModelSpec::Radar(RadarSpec::full(m.init_seed)),
        }
    }

    /// The model architecture; `None` when the config has no model section.
    pub fn model_spec(&self) -> Option<ModelSpec> {
        self.model.as_ref().map(|m| self.model_spec_for(m))
    }

    /// Canonical JSON echo of the config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(&Sha256::digest(self.canonical_json().as_bytes())[..8])
    }
}
