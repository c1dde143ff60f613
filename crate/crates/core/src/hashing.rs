//! SHA-256 counter-mode expansion shared by privacy amplification, the
//! pairwise KDF and the mask keystream.

use sha2::{Digest, Sha256};

use crate::bits::BitString;

/// Returns the first `n_bytes` of `SHA-256(input ∥ LE64(0)) ∥ SHA-256(input ∥ LE64(1)) ∥ …`.
pub fn expand_bytes(input: &[u8], n_bytes: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(n_bytes.div_ceil(32) * 32);
    let mut counter: u64 = 0;
    while out.len() < n_bytes {
        let mut h = Sha256::new();
        h.update(input);
        h.update(counter.to_le_bytes());
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(n_bytes);
    out
}

/// Bit-level variant of [`expand_bytes`], truncated to `n_bits` (MSB-first).
pub fn expand_bits(input: &[u8], n_bits: usize) -> BitString {
    BitString::from_bytes(&expand_bytes(input, n_bits.div_ceil(8)), n_bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_block_is_plain_sha256_with_zero_counter() {
        let mut h = Sha256::new();
        h.update(b"abc");
        h.update([0u8; 8]);
        let want = h.finalize();
        assert_eq!(expand_bytes(b"abc", 32), want.as_slice());
    }

    #[test]
    fn longer_outputs_extend_shorter_ones() {
        let short = expand_bytes(b"seed", 40);
        let long = expand_bytes(b"seed", 100);
        assert_eq!(&long[..40], short.as_slice());
        assert_eq!(expand_bits(b"seed", 13).len(), 13);
    }
}
