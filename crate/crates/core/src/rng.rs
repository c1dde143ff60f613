//! Labeled, seed-derived random substreams.
//!
//! Every consumer of randomness asks for its own stream by label, so adding or
//! removing one consumer (for example toggling the eavesdropper) never shifts
//! the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Deterministic generator type used throughout the crate.
pub type SimRng = ChaCha20Rng;

/// Builds the generator for `label` under the 64-bit root `seed`.
pub fn substream(seed: u64, label: &str) -> SimRng {
    substream_indexed(seed, label, &[])
}

/// Like [`substream`], with extra integer coordinates (round, client, ...).
pub fn substream_indexed(seed: u64, label: &str, coords: &[u64]) -> SimRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    for c in coords {
        hasher.update(c.to_le_bytes());
    }
    SimRng::from_seed(hasher.finalize().into())
}

/// Derives a child 64-bit seed, for handing to APIs that take a plain seed.
pub fn child_seed(seed: u64, label: &str, coords: &[u64]) -> u64 {
    use rand::RngCore;
    substream_indexed(seed, label, coords).next_u64()
}
