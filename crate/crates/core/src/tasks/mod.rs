//! The two learning tasks: channel estimation and radar spectrum segmentation.

pub mod channel;
pub mod container;
pub mod data;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod radar;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use data::{ChannelSample, Dataset, RadarSample};
pub use metrics::MetricError;
pub use model::{ChannelSpec, ModelSpec, RadarSpec};
pub use train::{train_local, TrainConfig, TrainOutcome};

use crate::params::{ParamError, ParamVec};
use metrics::SegmentationCounts;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("parameters do not match the model: {0}")]
    Params(#[from] ParamError),
    #[error("model and dataset belong to different tasks")]
    TaskMismatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss})")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Channel,
    Radar,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Channel => "channel",
            Task::Radar => "radar",
        }
    }
}

impl ModelSpec {
    pub fn task(&self) -> Task {
        match self {
            ModelSpec::Channel(_) => Task::Channel,
            ModelSpec::Radar(_) => Task::Radar,
        }
    }
}

/// Borrowed minibatch of one task's samples.
pub enum Batch<'a> {
    Channel(Vec<&'a ChannelSample>),
    Radar(Vec<&'a RadarSample>),
}

impl<'a> Batch<'a> {
    pub fn gather(data: &'a Dataset, indices: &[usize]) -> Self {
        match data {
            Dataset::Channel(s) => Batch::Channel(indices.iter().map(|&i| &s[i]).collect()),
            Dataset::Radar(s) => Batch::Radar(indices.iter().map(|&i| &s[i]).collect()),
        }
    }
}

/// Mean batch loss (MSE or pixel cross-entropy) and its gradient.
pub fn loss_and_grad(spec: &ModelSpec, params: &ParamVec, batch: &Batch) -> Result<(f64, ParamVec), TaskError> {
    match (spec, batch) {
        (ModelSpec::Channel(s), Batch::Channel(b)) => Ok(channel::loss_and_grad(s, params, b)),
        (ModelSpec::Radar(s), Batch::Radar(b)) => Ok(radar::loss_and_grad(s, params, b)),
        _ => Err(TaskError::TaskMismatch),
    }
}

/// Mean loss over a whole dataset.
pub fn dataset_loss(spec: &ModelSpec, params: &ParamVec, data: &Dataset) -> Result<f64, TaskError> {
    if data.is_empty() {
        return Err(TaskError::EmptyDataset);
    }
    match (spec, data) {
        (ModelSpec::Channel(s), Dataset::Channel(d)) => Ok(channel::loss(s, params, d)),
        (ModelSpec::Radar(s), Dataset::Radar(d)) => Ok(radar::loss(s, params, d)),
        _ => Err(TaskError::TaskMismatch),
    }
}

pub fn eval_channel(spec: &ChannelSpec, params: &ParamVec, data: &[ChannelSample]) -> Result<f64, TaskError> {
    let preds: Vec<Vec<f64>> = data.iter().map(|s| channel::predict(spec, params, s)).collect();
    Ok(metrics::nmse(preds.iter().zip(data).map(|(p, s)| (p.as_slice(), s.truth.as_slice())))?)
}

/// Pixel accuracy and mean IoU over the dataset.
pub fn eval_radar(spec: &RadarSpec, params: &ParamVec, data: &[RadarSample]) -> Result<(f64, f64), TaskError> {
    if data.is_empty() {
        return Err(TaskError::EmptyDataset);
    }
    let mut counts = SegmentationCounts::new(spec.classes);
    for s in data {
        counts.add(&radar::predict_labels(spec, params, s), &s.labels)?;
    }
    Ok((counts.accuracy()?, counts.miou()?))
}

/// Validation metrics for either task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Utility {
    Channel { nmse: f64 },
    Radar { accuracy: f64, miou: f64 },
}

impl Utility {
    pub fn nmse(&self) -> Option<f64> {
        match *self {
            Utility::Channel { nmse } => Some(nmse),
            Utility::Radar { .. } => None,
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        match *self {
            Utility::Radar { accuracy, .. } => Some(accuracy),
            Utility::Channel { .. } => None,
        }
    }

    pub fn miou(&self) -> Option<f64> {
        match *self {
            Utility::Radar { miou, .. } => Some(miou),
            Utility::Channel { .. } => None,
        }
    }
}

pub fn evaluate(spec: &ModelSpec, params: &ParamVec, data: &Dataset) -> Result<Utility, TaskError> {
    spec.check_params(params)?;
    match (spec, data) {
        (ModelSpec::Channel(s), Dataset::Channel(d)) => Ok(Utility::Channel { nmse: eval_channel(s, params, d)? }),
        (ModelSpec::Radar(s), Dataset::Radar(d)) => {
            let (accuracy, miou) = eval_radar(s, params, d)?;
            Ok(Utility::Radar { accuracy, miou })
        }
        _ => Err(TaskError::TaskMismatch),
    }
}
