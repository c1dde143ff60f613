//! Byte-exact comparison against `tests/golden/vectors.json`, produced by
//! `tests/golden/generate.py` from hashlib alone.

use qkdfl::bits::BitString;
use qkdfl::hashing::expand_bytes;
use qkdfl::masking::{apply_pairwise_masks, derive_pair_key, tensor_keystream, MaskingContext};
use qkdfl::params::{ParamVec, Tensor};
use qkdfl::qkd::privacy_amplify;
use serde::Deserialize;

#[derive(Deserialize)]
pub struct Vectors {
    pub expand: Vec<ExpandCase>,
    pub privacy_amplification: Vec<PaCase>,
    pub pair_keys: Vec<PairKeyCase>,
    pub keystreams: Vec<KeystreamCase>,
    pub masked_zero_update: MaskedCase,
}

#[derive(Deserialize)]
pub struct ExpandCase {
    pub input: String,
    pub n_bytes: usize,
    pub output: String,
}

#[derive(Deserialize)]
pub struct PaCase {
    pub sifted: String,
    pub final_len: usize,
    pub key: String,
}

#[derive(Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub key: String,
}

#[derive(Deserialize)]
pub struct PairKeyCase {
    pub round_seed: String,
    pub round_index: u64,
    pub num_clients: usize,
    pub key_bits: usize,
    pub pairs: Vec<Pair>,
}

#[derive(Deserialize)]
pub struct KeystreamCase {
    pub pair_key: String,
    pub tensor_ordinal: u64,
    pub n_bits: usize,
    pub bits: String,
}

#[derive(Deserialize)]
pub struct MaskedClient {
    pub client: usize,
    pub tensors: Vec<Tensor>,
}

#[derive(Deserialize)]
pub struct MaskedCase {
    pub round_seed: String,
    pub round_index: u64,
    pub num_clients: usize,
    pub gamma: f64,
    pub key_bits: usize,
    pub clients: Vec<MaskedClient>,
}

pub fn load() -> Vectors {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/vectors.json");
    serde_json::from_str(&std::fs::read_to_string(path).expect("golden vectors present")).expect("golden vectors parse")
}

fn bits(s: &str) -> BitString {
    BitString::parse(s).expect("bit string")
}

fn context(seed: &str, round: u64, k: usize, gamma: f64, key_bits: usize) -> MaskingContext {
    let mut ctx = MaskingContext::new(bits(seed), round, k, gamma).expect("context");
    ctx.key_bits = key_bits;
    ctx
}

/// Number of vectors compared and a description of every mismatch, per family.
pub fn check_expand(v: &Vectors) -> (usize, Vec<String>) {
    let mut bad = Vec::new();
    for (n, c) in v.expand.iter().enumerate() {
        let input = hex::decode(&c.input).expect("hex");
        if hex::encode(expand_bytes(&input, c.n_bytes)) != c.output {
            bad.push(format!("expand #{n}"));
        }
    }
    (v.expand.len(), bad)
}

pub fn check_privacy_amplification(v: &Vectors) -> (usize, Vec<String>) {
    let mut bad = Vec::new();
    for (n, c) in v.privacy_amplification.iter().enumerate() {
        if privacy_amplify(&bits(&c.sifted), c.final_len).to_string() != c.key {
            bad.push(format!("privacy amplification #{n} ({} -> {} bits)", c.sifted.len(), c.final_len));
        }
    }
    (v.privacy_amplification.len(), bad)
}

pub fn check_pair_keys(v: &Vectors) -> (usize, Vec<String>) {
    let mut bad = Vec::new();
    let mut count = 0;
    for (n, c) in v.pair_keys.iter().enumerate() {
        let ctx = context(&c.round_seed, c.round_index, c.num_clients, 1.0, c.key_bits);
        for p in &c.pairs {
            count += 2;
            for (a, b) in [(p.i, p.j), (p.j, p.i)] {
                if derive_pair_key(&ctx, a, b).expect("valid pair").to_string() != p.key {
                    bad.push(format!("pair key case {n} ({a},{b})"));
                }
            }
        }
    }
    (count, bad)
}

pub fn check_keystreams(v: &Vectors) -> (usize, Vec<String>) {
    let mut bad = Vec::new();
    for (n, c) in v.keystreams.iter().enumerate() {
        if tensor_keystream(&bits(&c.pair_key), c.tensor_ordinal, c.n_bits).to_string() != c.bits {
            bad.push(format!("keystream #{n}"));
        }
    }
    (v.keystreams.len(), bad)
}

pub fn check_masked_update(v: &Vectors) -> (usize, Vec<String>) {
    let c = &v.masked_zero_update;
    let ctx = context(&c.round_seed, c.round_index, c.num_clients, c.gamma, c.key_bits);
    let zeros = ParamVec::new(
        c.clients[0]
            .tensors
            .iter()
            .map(|t| Tensor { name: t.name.clone(), shape: t.shape.clone(), data: vec![0.0; t.data.len()] })
            .collect(),
    )
    .expect("valid params");
    let mut bad = Vec::new();
    for client in &c.clients {
        let masked = apply_pairwise_masks(&zeros, client.client, &ctx).expect("masking");
        for (got, want) in masked.params.entries().iter().zip(&client.tensors) {
            if got.data != want.data {
                bad.push(format!("masked update client {} tensor {}", client.client, want.name));
            }
        }
    }
    (c.clients.len(), bad)
}
