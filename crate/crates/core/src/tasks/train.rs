//! Local minibatch training with Adam.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{loss_and_grad, Batch, Dataset, ModelSpec, TaskError};
use crate::params::ParamVec;
use crate::rng::substream_indexed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl TrainConfig {
    /// Adam with moment coefficients 0.9 / 0.999 and epsilon 1e-8.
    pub fn new(epochs: usize, lr: f64, batch_size: usize) -> Self {
        Self { epochs, lr, batch_size, beta1: 0.9, beta2: 0.999, adam_eps: 1e-8 }
    }
}

/// Adam moment estimates over a flattened parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    pub fn step(&mut self, params: &mut ParamVec, grads: &ParamVec) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let mut k = 0;
        for (p, g) in params.entries_mut().iter_mut().zip(grads.entries()) {
            for (x, &d) in p.data.iter_mut().zip(&g.data) {
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * d;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * d * d;
                let mh = self.m[k] / c1;
                let vh = self.v[k] / c2;
                *x -= self.lr * mh / (vh.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

/// Parameters after local training, plus the mean minibatch loss of each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ParamVec,
    pub epoch_losses: Vec<f64>,
}

/// Runs `cfg.epochs` epochs of shuffled minibatch Adam from `params`.
pub fn train_local(
    spec: &ModelSpec,
    params: &ParamVec,
    data: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, TaskError> {
    spec.check_params(params)?;
    if cfg.batch_size == 0 {
        return Err(TaskError::InvalidConfig("batch_size must be positive".into()));
    }
    if data.is_empty() && cfg.epochs > 0 {
        return Err(TaskError::EmptyDataset);
    }
    let mut params = params.clone();
    let mut opt = Adam::new(params.total_len(), cfg);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = substream_indexed(seed, "shuffle", &[epoch as u64]);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::gather(data, chunk);
            let (loss, grads) = loss_and_grad(spec, &params, &batch)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(TaskError::Diverged { epoch, batch: b, loss });
            }
            opt.step(&mut params, &grads);
            total += loss;
            batches += 1;
        }
        epoch_losses.push(total / batches as f64);
    }
    if !params.is_finite() {
        return Err(TaskError::Diverged { epoch: cfg.epochs, batch: 0, loss: f64::NAN });
    }
    Ok(TrainOutcome { params, epoch_losses })
}
