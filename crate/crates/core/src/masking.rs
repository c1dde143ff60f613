//! Pairwise additive masking for secure aggregation.
//!
//! Every client pair `(i, j)` derives the same key from the round seed. The
//! lower-indexed client adds the resulting `±γ` mask and the higher-indexed
//! client subtracts it, so all masks vanish from the sum of uploads.
//!
//! Each tensor of a model draws from its own keystream, obtained by folding
//! the tensor ordinal into the counter-mode hash of the pair key.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bits::BitString;
use crate::hashing;
use crate::params::{ParamError, ParamVec};

/// Default bit length of a derived pairwise key.
pub const DEFAULT_PAIR_KEY_BITS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskingError {
    #[error("invalid client pair ({i}, {j}) for {k} clients")]
    InvalidPair { i: usize, j: usize, k: usize },
    #[error("invalid masking context: {0}")]
    InvalidContext(String),
    #[error("aggregation shape error: {0}")]
    Shape(#[from] ParamError),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("leakage proxy undefined: {0}")]
    UndefinedProxy(&'static str),
}

/// Round-level secrets and protocol parameters shared by all clients.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskingContext {
    pub round_seed: BitString,
    pub round_index: u64,
    pub num_clients: usize,
    pub mask_scale: f64,
    pub key_bits: usize,
}

impl MaskingContext {
    pub fn new(
        round_seed: BitString,
        round_index: u64,
        num_clients: usize,
        mask_scale: f64,
    ) -> Result<Self, MaskingError> {
        let ctx = Self { round_seed, round_index, num_clients, mask_scale, key_bits: DEFAULT_PAIR_KEY_BITS };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<(), MaskingError> {
        if self.num_clients < 2 {
            return Err(MaskingError::InvalidContext(format!("need at least 2 clients, got {}", self.num_clients)));
        }
        // γ = 0 is admitted so that degenerate (unmasked) runs can be expressed.
        if !(self.mask_scale >= 0.0 && self.mask_scale.is_finite()) {
            return Err(MaskingError::InvalidContext(format!(
                "mask scale must be finite and non-negative, got {}",
                self.mask_scale
            )));
        }
        if self.round_seed.len() < 256 {
            return Err(MaskingError::InvalidContext(format!(
                "round seed must carry at least 256 bits, got {}",
                self.round_seed.len()
            )));
        }
        if self.key_bits == 0 {
            return Err(MaskingError::InvalidContext("key_bits must be positive".into()));
        }
        Ok(())
    }
}

/// A client's masked parameters as seen by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedUpdate {
    pub client_index: usize,
    pub round_index: u64,
    pub params: ParamVec,
}

/// `KDF(seed, r, min(i,j), max(i,j))` expanded to `ctx.key_bits` bits.
pub fn derive_pair_key(ctx: &MaskingContext, i: usize, j: usize) -> Result<BitString, MaskingError> {
    let k = ctx.num_clients;
    if i == j || i >= k || j >= k {
        return Err(MaskingError::InvalidPair { i, j, k });
    }
    let (lo, hi) = (i.min(j) as u64, i.max(j) as u64);
    let mut input = ctx.round_seed.to_bytes();
    input.extend_from_slice(&ctx.round_index.to_le_bytes());
    input.extend_from_slice(&lo.to_le_bytes());
    input.extend_from_slice(&hi.to_le_bytes());
    Ok(hashing::expand_bits(&input, ctx.key_bits))
}

fn keystream_prefix(pair_key: &BitString, tensor_ordinal: u64) -> Vec<u8> {
    let mut input = pair_key.to_bytes();
    input.extend_from_slice(&tensor_ordinal.to_le_bytes());
    input
}

/// The first `n_bits` of the keystream for one tensor of one pair.
pub fn tensor_keystream(pair_key: &BitString, tensor_ordinal: u64, n_bits: usize) -> BitString {
    hashing::expand_bits(&keystream_prefix(pair_key, tensor_ordinal), n_bits)
}

/// Maps bits to `+γ` (1) or `-γ` (0), reading `bits` cyclically to fill `shape`.
///
/// Panics on an empty bit string.
pub fn bits_to_mask(bits: &BitString, shape: &[usize], gamma: f64) -> Vec<f64> {
    assert!(!bits.is_empty(), "mask needs at least one key bit");
    let n: usize = shape.iter().product();
    (0..n).map(|e| if bits.get(e % bits.len()) { gamma } else { -gamma }).collect()
}

/// The `±γ` mask for one tensor: [`bits_to_mask`] over [`tensor_keystream`].
pub fn pair_mask(pair_key: &BitString, shape: &[usize], tensor_ordinal: u64, gamma: f64) -> Vec<f64> {
    let n: usize = shape.iter().product();
    bits_to_mask(&tensor_keystream(pair_key, tensor_ordinal, n.max(1)), shape, gamma)
}

/// Adds `sign * mask` to `data` while reading the keystream block by block.
fn add_keystream_mask(data: &mut [f64], pair_key: &BitString, tensor_ordinal: u64, signed_gamma: f64) {
    let prefix = keystream_prefix(pair_key, tensor_ordinal);
    for (counter, chunk) in data.chunks_mut(256).enumerate() {
        let mut h = Sha256::new();
        h.update(&prefix);
        h.update((counter as u64).to_le_bytes());
        let block = h.finalize();
        for (e, x) in chunk.iter_mut().enumerate() {
            let bit = block[e / 8] >> (7 - e % 8) & 1;
            *x += if bit == 1 { signed_gamma } else { -signed_gamma };
        }
    }
}

/// Masks `params` for client `i`: `+m_ij` for every `j > i`, `-m_ji` for every `j < i`.
pub fn apply_pairwise_masks(params: &ParamVec, i: usize, ctx: &MaskingContext) -> Result<MaskedUpdate, MaskingError> {
    ctx.validate()?;
    if i >= ctx.num_clients {
        return Err(MaskingError::InvalidPair { i, j: i, k: ctx.num_clients });
    }
    if !params.is_finite() {
        return Err(MaskingError::Protocol(format!("client {i} parameters are not finite")));
    }
    let mut masked = params.clone();
    for j in (0..ctx.num_clients).filter(|&j| j != i) {
        let key = derive_pair_key(ctx, i, j)?;
        let sign = if i < j { 1.0 } else { -1.0 };
        for (ordinal, tensor) in masked.entries_mut().iter_mut().enumerate() {
            add_keystream_mask(&mut tensor.data, &key, ordinal as u64, sign * ctx.mask_scale);
        }
    }
    Ok(MaskedUpdate { client_index: i, round_index: ctx.round_index, params: masked })
}

/// Server-side mean of the masked uploads.
///
/// Inputs are summed in client-index order, so the result does not depend on
/// arrival order.
pub fn aggregate(masked: &[MaskedUpdate]) -> Result<ParamVec, MaskingError> {
    if masked.len() < 2 {
        return Err(MaskingError::Protocol(format!("need at least 2 masked updates, got {}", masked.len())));
    }
    let round = masked[0].round_index;
    if let Some(u) = masked.iter().find(|u| u.round_index != round) {
        return Err(MaskingError::Protocol(format!("mixed rounds: {} and {}", round, u.round_index)));
    }
    let mut ordered: Vec<&MaskedUpdate> = masked.iter().collect();
    ordered.sort_by_key(|u| u.client_index);
    if ordered.windows(2).any(|w| w[0].client_index == w[1].client_index) {
        return Err(MaskingError::Protocol("duplicate client index".into()));
    }
    let params: Vec<&ParamVec> = ordered.iter().map(|u| &u.params).collect();
    Ok(ParamVec::mean_of(&params)?)
}

/// Cosine similarity and Pearson correlation between a true and a masked delta.
pub fn leakage_proxies(true_delta: &ParamVec, masked_delta: &ParamVec) -> Result<(f64, f64), MaskingError> {
    true_delta.check_same_structure(masked_delta)?;
    let x = true_delta.to_flat_vec();
    let y = masked_delta.to_flat_vec();
    if x == y && x.iter().any(|&v| v != 0.0) && x.iter().any(|&v| v != x[0]) {
        return Ok((1.0, 1.0));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let nx = dot(&x, &x).sqrt();
    let ny = dot(&y, &y).sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(MaskingError::UndefinedProxy("zero-norm delta"));
    }
    let cosine = (dot(&x, &y) / (nx * ny)).clamp(-1.0, 1.0);

    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MaskingError::UndefinedProxy("zero-variance delta"));
    }
    let pearson = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok((cosine, pearson))
}
