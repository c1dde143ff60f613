//! BB84 key agreement at the protocol-abstraction level.
//!
//! A session walks through preparation, an optional intercept-resend
//! eavesdropper, depolarizing noise, Bob's measurement, sifting, QBER
//! estimation over every sifted position, and hash-based privacy
//! amplification. Each source of randomness reads from its own labeled
//! substream of the session seed, so enabling Eve leaves Alice's, Bob's and the
//! channel's draws untouched.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::hashing;
use crate::rng::substream;

/// Lower bound on the length of a privacy-amplified key.
pub const MIN_FINAL_LEN: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QkdError {
    #[error("invalid BB84 configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate session: no sifted positions")]
    DegenerateSession,
    #[error("bit strings differ in length ({alice}, {bob}, mask {mask})")]
    LengthMismatch { alice: usize, bob: usize, mask: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bb84Config {
    /// Number of raw qubits sent by Alice.
    pub raw_len: usize,
    /// Privacy-amplification compression ratio, in (0, 1].
    pub pa_ratio: f64,
    /// Per-qubit depolarizing probability.
    pub depolarize_prob: f64,
    pub eve_present: bool,
    pub rng_seed: u64,
}

impl Default for Bb84Config {
    fn default() -> Self {
        Self { raw_len: 2000, pa_ratio: 0.8, depolarize_prob: 0.0, eve_present: false, rng_seed: 0 }
    }
}

impl Bb84Config {
    pub fn validate(&self) -> Result<(), QkdError> {
        if self.raw_len < 64 {
            return Err(QkdError::InvalidConfig(format!("raw_len must be at least 64, got {}", self.raw_len)));
        }
        if !(self.pa_ratio > 0.0 && self.pa_ratio <= 1.0) {
            return Err(QkdError::InvalidConfig(format!("pa_ratio must lie in (0, 1], got {}", self.pa_ratio)));
        }
        if !(0.0..=1.0).contains(&self.depolarize_prob) {
            return Err(QkdError::InvalidConfig(format!(
                "depolarize_prob must lie in [0, 1], got {}",
                self.depolarize_prob
            )));
        }
        Ok(())
    }
}

/// Result of one BB84 run.
#[derive(Debug, Clone, PartialEq)]
pub struct QkdSession {
    pub key: BitString,
    pub raw_len: usize,
    pub sifted_len: usize,
    pub final_len: usize,
    /// Sifted positions where Bob's bit disagrees with Alice's.
    pub sifted_errors: usize,
    pub qber: f64,
}

impl QkdSession {
    /// Whether the session must be discarded at abort threshold `tau`.
    pub fn exceeds(&self, tau: f64) -> bool {
        self.qber >= tau
    }
}

/// Length of the privacy-amplified key for a given sifted length.
pub fn final_key_len(sifted_len: usize, pa_ratio: f64) -> usize {
    MIN_FINAL_LEN.max((pa_ratio * sifted_len as f64).floor() as usize)
}

/// A qubit in flight: its logical bit and the basis it was prepared in.
#[derive(Debug, Clone, Copy)]
struct Qubit {
    bit: bool,
    basis: bool,
}

/// Measuring in the preparation basis reads the bit; otherwise the outcome is `coin`.
fn measure(q: Qubit, basis: bool, coin: bool) -> bool {
    if q.basis == basis {
        q.bit
    } else {
        coin
    }
}

pub fn run_bb84(cfg: &Bb84Config) -> Result<QkdSession, QkdError> {
    cfg.validate()?;
    let n = cfg.raw_len;
    let seed = cfg.rng_seed;

    let mut rng = substream(seed, "alice-bits");
    let alice_bits: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
    let mut rng = substream(seed, "alice-bases");
    let alice_bases: Vec<bool> = (0..n).map(|_| rng.gen()).collect();

    let mut channel: Vec<Qubit> =
        alice_bits.iter().zip(&alice_bases).map(|(&bit, &basis)| Qubit { bit, basis }).collect();

    if cfg.eve_present {
        // Intercept-resend: Eve measures in her own random basis and forwards
        // her outcome prepared in that basis.
        let mut bases = substream(seed, "eve-bases");
        let mut coins = substream(seed, "eve-outcomes");
        for q in channel.iter_mut() {
            let eve_basis: bool = bases.gen();
            let coin: bool = coins.gen();
            *q = Qubit { bit: measure(*q, eve_basis, coin), basis: eve_basis };
        }
    }

    // Depolarizing noise replaces the logical bit with a fair coin; both draws
    // are taken for every qubit so the stream does not depend on outcomes.
    let mut flags = substream(seed, "noise-flags");
    let mut coins = substream(seed, "noise-bits");
    for q in channel.iter_mut() {
        let hit = flags.gen_bool(cfg.depolarize_prob);
        let coin: bool = coins.gen();
        if hit {
            q.bit = coin;
        }
    }

    let mut bases = substream(seed, "bob-bases");
    let mut coins = substream(seed, "bob-outcomes");
    let mut bob_bases = Vec::with_capacity(n);
    let mut bob_bits = Vec::with_capacity(n);
    for q in &channel {
        let basis: bool = bases.gen();
        let coin: bool = coins.gen();
        bob_bases.push(basis);
        bob_bits.push(measure(*q, basis, coin));
    }

    let sift_mask: Vec<bool> = alice_bases.iter().zip(&bob_bases).map(|(a, b)| a == b).collect();
    let sifted: BitString = bob_bits.iter().zip(&sift_mask).filter_map(|(&b, &keep)| keep.then_some(b)).collect();
    let sifted_len = sifted.len();
    if sifted_len == 0 {
        return Err(QkdError::DegenerateSession);
    }
    let sifted_errors =
        alice_bits.iter().zip(&bob_bits).zip(&sift_mask).filter(|((a, b), &keep)| keep && a != b).count();
    let qber = sifted_errors as f64 / sifted_len as f64;

    let final_len = final_key_len(sifted_len, cfg.pa_ratio);
    if final_len > sifted_len {
        log::warn!("privacy amplification expands {sifted_len} sifted bits to {final_len}; key is not compressive");
    }
    let key = privacy_amplify(&sifted, final_len);

    Ok(QkdSession { key, raw_len: n, sifted_len, final_len, sifted_errors, qber })
}

/// Hash extractor: `final_len` bits of SHA-256 counter-mode output over the
/// MSB-first packed sifted bits.
///
/// Panics if `sifted` is empty or `final_len` is zero.
pub fn privacy_amplify(sifted: &BitString, final_len: usize) -> BitString {
    assert!(!sifted.is_empty(), "privacy amplification needs sifted bits");
    assert!(final_len >= 1, "final key length must be positive");
    hashing::expand_bits(&sifted.to_bytes(), final_len)
}

/// Fraction of sifted positions where `alice` and `bob` disagree.
pub fn qber_of(alice: &BitString, bob: &BitString, sift_mask: &[bool]) -> Result<f64, QkdError> {
    if alice.len() != bob.len() || alice.len() != sift_mask.len() {
        return Err(QkdError::LengthMismatch { alice: alice.len(), bob: bob.len(), mask: sift_mask.len() });
    }
    let mut sifted = 0usize;
    let mut errors = 0usize;
    for ((a, b), &keep) in alice.iter().zip(bob.iter()).zip(sift_mask) {
        if keep {
            sifted += 1;
            errors += usize::from(a != b);
        }
    }
    if sifted == 0 {
        return Err(QkdError::DegenerateSession);
    }
    Ok(errors as f64 / sifted as f64)
}
