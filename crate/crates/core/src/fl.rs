//! Federated rounds: QKD key establishment with a QBER gate, local training,
//! pairwise masking, aggregation and per-round measurements.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::masking::{self, MaskedUpdate, MaskingContext, MaskingError};
use crate::params::{ParamError, ParamVec};
use crate::qkd::{self, Bb84Config, QkdError};
use crate::rng::{child_seed, substream_indexed};
use crate::tasks::{self, Dataset, ModelSpec, TaskError, TrainConfig, Utility};

#[derive(Debug, Error)]
pub enum FlError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("QKD: {0}")]
    Qkd(#[from] QkdError),
    #[error("masking: {0}")]
    Masking(#[from] MaskingError),
    #[error("task: {0}")]
    Task(#[from] TaskError),
    #[error("parameters: {0}")]
    Params(#[from] ParamError),
}

/// How client uploads are protected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Raw parameters are uploaded.
    Plain,
    /// Pairwise masks keyed from a seeded PRG.
    ClassicalSa,
    /// Pairwise masks keyed from a BB84 session, gated on QBER.
    QkdSa,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::ClassicalSa => "classical_sa",
            Mode::QkdSa => "qkd_sa",
        }
    }

    pub fn is_masked(self) -> bool {
        !matches!(self, Mode::Plain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RoundStatus {
    Secure,
    Aborted,
}

impl RoundStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RoundStatus::Secure => "SECURE",
            RoundStatus::Aborted => "ABORTED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub round_index: u64,
    pub num_clients: usize,
    pub mode: Mode,
    pub train: TrainConfig,
    pub qber_threshold: f64,
    /// Session parameters; `rng_seed` is used as given.
    pub bb84: Bb84Config,
    pub mask_scale: f64,
    pub key_bits: usize,
    /// Root seed for client training and classical mask keys.
    pub seed: u64,
}

impl RoundConfig {
    pub fn validate(&self) -> Result<(), FlError> {
        if self.num_clients == 0 {
            return Err(FlError::Config("need at least one client".into()));
        }
        if self.mode.is_masked() && self.num_clients < 2 {
            return Err(FlError::Config(format!(
                "{} needs at least 2 clients, got {}",
                self.mode.as_str(),
                self.num_clients
            )));
        }
        if !(self.qber_threshold > 0.0 && self.qber_threshold < 1.0) {
            return Err(FlError::Config(format!("QBER threshold must lie in (0, 1), got {}", self.qber_threshold)));
        }
        self.bb84.validate()?;
        Ok(())
    }
}

/// Correlation between one client's true and masked deltas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientLeakage {
    pub client: usize,
    pub cosine: f64,
    pub pearson: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u64,
    pub mode: Mode,
    pub num_clients: usize,
    pub eve_present: bool,
    pub status: RoundStatus,
    /// Measured QBER; absent when no QKD session was run.
    pub qber: Option<f64>,
    pub sifted_len: Option<usize>,
    pub final_len: Option<usize>,
    /// Validation metrics of the global model after the round.
    pub utility: Utility,
    /// `‖mean(plain) − mean(masked)‖∞`; absent for aborted rounds.
    pub recon_error: Option<f64>,
    pub leakage: Vec<ClientLeakage>,
    /// Mean over clients of the cosine and Pearson proxies.
    pub leakage_mean_cosine: Option<f64>,
    pub leakage_mean_pearson: Option<f64>,
    pub bytes_down: u64,
    pub bytes_up: u64,
}

/// The model, client shards and validation data of one federation.
#[derive(Debug, Clone)]
pub struct Federation {
    pub model: ModelSpec,
    pub shards: Vec<Dataset>,
    pub validation: Dataset,
}

/// Splits `n` items labeled by `keys` into `k` disjoint, nonempty, covering shards.
///
/// An infinite `skew` deals items round-robin after a seeded shuffle. A finite
/// `skew` is the concentration of a symmetric Dirichlet drawn independently
/// for every key group; each group is split across clients in those
/// proportions. Clients left empty then take one item from the largest shard.
pub fn partition_indices(keys: &[i64], k: usize, skew: f64, seed: u64) -> Result<Vec<Vec<usize>>, FlError> {
    let n = keys.len();
    if k == 0 || n < k {
        return Err(FlError::Config(format!("cannot split {n} samples across {k} clients")));
    }
    if skew.is_nan() || skew <= 0.0 {
        return Err(FlError::Config(format!("skew must be positive, got {skew}")));
    }
    let mut shards = vec![Vec::new(); k];
    if skew.is_infinite() {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut substream_indexed(seed, "partition-shuffle", &[]));
        for (pos, i) in order.into_iter().enumerate() {
            shards[pos % k].push(i);
        }
    } else {
        let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &key) in keys.iter().enumerate() {
            groups.entry(key).or_default().push(i);
        }
        let gamma = Gamma::new(skew, 1.0).map_err(|e| FlError::Config(e.to_string()))?;
        for (g, (_, mut members)) in groups.into_iter().enumerate() {
            let mut rng = substream_indexed(seed, "partition-group", &[g as u64]);
            members.shuffle(&mut rng);
            let mut weights: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                weights.iter_mut().for_each(|w| *w /= total);
            } else {
                weights = vec![0.0; k];
                weights[rng.gen_range(0..k)] = 1.0;
            }
            let m = members.len();
            let mut start = 0usize;
            let mut cum = 0.0;
            for (c, w) in weights.iter().enumerate() {
                cum += w;
                let end = if c + 1 == k { m } else { ((cum * m as f64).round() as usize).clamp(start, m) };
                shards[c].extend_from_slice(&members[start..end]);
                start = end;
            }
        }
    }
    while let Some(empty) = shards.iter().position(Vec::is_empty) {
        let donor = (0..k).max_by_key(|&c| (shards[c].len(), std::cmp::Reverse(c))).expect("k > 0");
        let item = shards[donor].pop().expect("donor holds at least two items");
        shards[empty].push(item);
    }
    for s in shards.iter_mut() {
        s.sort_unstable();
    }
    Ok(shards)
}

/// Skewed split of `data` across `k` clients; see [`partition_indices`].
pub fn partition_non_iid(data: &Dataset, k: usize, skew: f64, seed: u64) -> Result<Vec<Dataset>, FlError> {
    let keys: Vec<i64> = (0..data.len()).map(|i| data.skew_key(i)).collect();
    Ok(partition_indices(&keys, k, skew, seed)?.iter().map(|idx| data.select(idx)).collect())
}

fn classical_round_seed(seed: u64, round: u64) -> BitString {
    let mut rng = substream_indexed(seed, "classical-sa-seed", &[round]);
    (0..256).map(|_| rng.gen::<bool>()).collect()
}

/// One round of federated training.
///
/// In `qkd_sa` mode the round opens with a BB84 session; a QBER at or above
/// the threshold aborts the round before any training or key use, and the
/// global model is returned unchanged.
pub fn run_round(fed: &Federation, global: &ParamVec, cfg: &RoundConfig) -> Result<(ParamVec, RoundReport), FlError> {
    cfg.validate()?;
    if fed.shards.len() != cfg.num_clients {
        return Err(FlError::Config(format!("{} shards for {} clients", fed.shards.len(), cfg.num_clients)));
    }
    fed.model.check_params(global)?;

    let mut report = RoundReport {
        round: cfg.round_index,
        mode: cfg.mode,
        num_clients: cfg.num_clients,
        eve_present: cfg.mode == Mode::QkdSa && cfg.bb84.eve_present,
        status: RoundStatus::Secure,
        qber: None,
        sifted_len: None,
        final_len: None,
        utility: Utility::Channel { nmse: f64::NAN },
        recon_error: None,
        leakage: Vec::new(),
        leakage_mean_cosine: None,
        leakage_mean_pearson: None,
        bytes_down: 0,
        bytes_up: 0,
    };

    let round_seed = match cfg.mode {
        Mode::Plain => None,
        Mode::ClassicalSa => Some(classical_round_seed(cfg.seed, cfg.round_index)),
        Mode::QkdSa => {
            let session = qkd::run_bb84(&cfg.bb84)?;
            report.qber = Some(session.qber);
            report.sifted_len = Some(session.sifted_len);
            report.final_len = Some(session.final_len);
            if session.exceeds(cfg.qber_threshold) {
                log::info!("round {} aborted: QBER {:.4} >= {}", cfg.round_index, session.qber, cfg.qber_threshold);
                report.status = RoundStatus::Aborted;
                report.utility = tasks::evaluate(&fed.model, global, &fed.validation)?;
                return Ok((global.clone(), report));
            }
            Some(session.key)
        }
    };

    let locals: Vec<ParamVec> = fed
        .shards
        .par_iter()
        .enumerate()
        .map(|(k, shard)| {
            let seed = child_seed(cfg.seed, "local-train", &[cfg.round_index, k as u64]);
            tasks::train_local(&fed.model, global, shard, &cfg.train, seed).map(|o| o.params)
        })
        .collect::<Result<_, _>>()?;
    let local_refs: Vec<&ParamVec> = locals.iter().collect();
    let plain_mean = ParamVec::mean_of(&local_refs)?;

    let (new_global, uploads) = match round_seed {
        None => {
            let uploads = locals.clone();
            report.recon_error = Some(0.0);
            (plain_mean, uploads)
        }
        Some(seed_bits) => {
            let ctx = MaskingContext {
                round_seed: seed_bits,
                round_index: cfg.round_index,
                num_clients: cfg.num_clients,
                mask_scale: cfg.mask_scale,
                key_bits: cfg.key_bits,
            };
            ctx.validate()?;
            let masked: Vec<MaskedUpdate> = locals
                .par_iter()
                .enumerate()
                .map(|(k, p)| masking::apply_pairwise_masks(p, k, &ctx))
                .collect::<Result<_, _>>()?;
            let agg = masking::aggregate(&masked)?;
            report.recon_error = Some(plain_mean.max_abs_diff(&agg)?);
            (agg, masked.into_iter().map(|m| m.params).collect())
        }
    };

    for (k, (local, upload)) in locals.iter().zip(&uploads).enumerate() {
        match masking::leakage_proxies(&local.sub(global)?, &upload.sub(global)?) {
            Ok((cosine, pearson)) => report.leakage.push(ClientLeakage { client: k, cosine, pearson }),
            Err(MaskingError::UndefinedProxy(why)) => {
                log::debug!("client {k}: leakage proxy undefined ({why})");
            }
            Err(e) => return Err(e.into()),
        }
    }
    if !report.leakage.is_empty() {
        let n = report.leakage.len() as f64;
        report.leakage_mean_cosine = Some(report.leakage.iter().map(|l| l.cosine).sum::<f64>() / n);
        report.leakage_mean_pearson = Some(report.leakage.iter().map(|l| l.pearson).sum::<f64>() / n);
    }

    report.bytes_down = global.byte_len();
    report.bytes_up = cfg.num_clients as u64 * global.byte_len();
    report.utility = tasks::evaluate(&fed.model, &new_global, &fed.validation)?;
    Ok((new_global, report))
}

/// The per-round configuration derived from `template` for round `r`: the
/// round index is set and the BB84 seed is drawn from the template seed.
pub fn round_config(template: &RoundConfig, r: u64) -> RoundConfig {
    let mut cfg = template.clone();
    cfg.round_index = r;
    cfg.bb84.rng_seed = child_seed(template.seed, "qkd-session", &[r]);
    cfg
}

/// Runs `rounds` rounds from `initial`, rounds numbered from 0.
pub fn run_training(
    fed: &Federation,
    initial: &ParamVec,
    rounds: usize,
    template: &RoundConfig,
) -> Result<(ParamVec, Vec<RoundReport>), FlError> {
    if rounds == 0 {
        return Err(FlError::Config("need at least one round".into()));
    }
    let mut global = initial.clone();
    let mut reports = Vec::with_capacity(rounds);
    for r in 0..rounds as u64 {
        let (next, report) = run_round(fed, &global, &round_config(template, r))?;
        global = next;
        reports.push(report);
    }
    Ok((global, reports))
}
