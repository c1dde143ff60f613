//! Channel-estimation CNN: forward pass and MSE loss gradient.

use super::data::ChannelSample;
use super::model::{block_backward, block_forward, ChannelSpec, Trace};
use super::nn::Map;
use crate::params::ParamVec;

fn input_map(spec: &ChannelSpec, s: &ChannelSample) -> Map {
    assert_eq!((s.height, s.width), (spec.height, spec.width), "sample grid does not match model");
    Map::from_vec(1, s.height, s.width, s.pilots.clone())
}

fn forward_traced(spec: &ChannelSpec, params: &ParamVec, s: &ChannelSample) -> (Map, Vec<Trace>) {
    let mut x = input_map(spec, s);
    let mut traces = Vec::with_capacity(3);
    for (idx, layer) in spec.layers().iter().enumerate() {
        let (a, t) = block_forward(layer, params, idx, x);
        traces.push(t);
        x = a;
    }
    (x, traces)
}

/// The estimate of `|H|` for one sample, row-major.
pub fn predict(spec: &ChannelSpec, params: &ParamVec, s: &ChannelSample) -> Vec<f64> {
    forward_traced(spec, params, s).0.data
}

/// Mean squared error over every element of the batch, with its gradient.
pub fn loss_and_grad(spec: &ChannelSpec, params: &ParamVec, batch: &[&ChannelSample]) -> (f64, ParamVec) {
    let layers = spec.layers();
    let mut grads = params.zeros_like();
    let n = (batch.len() * spec.height * spec.width) as f64;
    let mut loss = 0.0;
    for s in batch {
        let (out, traces) = forward_traced(spec, params, s);
        let mut g = Map { data: vec![0.0; out.data.len()], ..out };
        for ((gi, y), t) in g.data.iter_mut().zip(&out.data).zip(&s.truth) {
            let d = y - t;
            loss += d * d;
            *gi = 2.0 * d / n;
        }
        for (idx, layer) in layers.iter().enumerate().rev() {
            g = block_backward(layer, params, idx, &traces[idx], &g, &mut grads);
        }
    }
    (loss / n, grads)
}

/// Mean squared error without gradients.
pub fn loss(spec: &ChannelSpec, params: &ParamVec, data: &[ChannelSample]) -> f64 {
    let n = (data.len() * spec.height * spec.width) as f64;
    data.iter()
        .map(|s| predict(spec, params, s).iter().zip(&s.truth).map(|(y, t)| (y - t) * (y - t)).sum::<f64>())
        .sum::<f64>()
        / n
}
