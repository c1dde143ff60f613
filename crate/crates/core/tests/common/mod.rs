//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use qkdfl::params::ParamVec;
use qkdfl::rng::substream;
use qkdfl::tasks::{loss_and_grad, Batch, ModelSpec};
use rand::Rng;

pub mod golden;

/// Central-difference derivative of the batch loss along one coordinate.
pub fn numeric_partial(spec: &ModelSpec, params: &ParamVec, batch: &Batch, tensor: usize, elem: usize, h: f64) -> f64 {
    let mut plus = params.clone();
    plus.entries_mut()[tensor].data[elem] += h;
    let mut minus = params.clone();
    minus.entries_mut()[tensor].data[elem] -= h;
    let fp = loss_and_grad(spec, &plus, batch).unwrap().0;
    let fm = loss_and_grad(spec, &minus, batch).unwrap().0;
    (fp - fm) / (2.0 * h)
}

/// Relative error with an absolute floor of 1e-6 in the denominator, so
/// vanishing partials are compared on an absolute scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub struct GradCheck {
    pub worst: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Compares analytic partials with central differences on sampled coordinates
/// until `want` of them have been checked, visiting every tensor in turn.
///
/// A coordinate whose central differences at steps 1e-5 and 1e-6 disagree
/// straddles a ReLU or max-pool kink, where the derivative is undefined; such
/// coordinates are skipped and counted.
pub fn gradient_check(spec: &ModelSpec, params: &ParamVec, batch: &Batch, want: usize, seed: u64) -> GradCheck {
    let (_, grads) = loss_and_grad(spec, params, batch).unwrap();
    let mut rng = substream(seed, "gradcheck");
    let tensors = params.entries().len();
    let mut out = GradCheck { worst: 0.0, checked: 0, skipped: 0 };
    let mut k = 0;
    while out.checked < want && out.skipped <= want / 5 {
        let t = k % tensors;
        k += 1;
        let e = rng.gen_range(0..params.entries()[t].len());
        let analytic = grads.entries()[t].data[e];
        let coarse = numeric_partial(spec, params, batch, t, e, 1e-5);
        let fine = numeric_partial(spec, params, batch, t, e, 1e-6);
        if rel_err(coarse, fine) > 1e-4 {
            out.skipped += 1;
            continue;
        }
        out.worst = out.worst.max(rel_err(analytic, coarse));
        out.checked += 1;
    }
    out
}

/// Replaces every bias with a small seeded value so bias paths carry signal.
pub fn randomize_biases(mut params: ParamVec, seed: u64) -> ParamVec {
    let mut rng = substream(seed, "bias");
    for t in params.entries_mut().iter_mut().filter(|t| t.name.ends_with(".bias")) {
        t.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.05..0.05));
    }
    params
}
