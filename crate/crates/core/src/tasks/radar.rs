//! U-Net segmenter: forward pass, softmax, and cross-entropy gradient.

use super::data::RadarSample;
use super::model::{block_backward, block_forward, LayerDef, RadarSpec, Trace};
use super::nn::{
    concat_channels, maxpool2_backward, maxpool2_forward, softmax_channels, split_channels, upsample2_backward,
    upsample2_forward, Map,
};
use crate::params::ParamVec;

struct Forward {
    logits: Map,
    traces: Vec<Trace>,
    /// Pool winners and input dims per encoder level.
    pools: Vec<(Vec<usize>, (usize, usize, usize))>,
}

fn input_map(spec: &RadarSpec, s: &RadarSample) -> Map {
    assert_eq!(s.size, spec.size, "sample size does not match model");
    Map::from_vec(spec.in_channels, s.size, s.size, s.spectrogram.clone())
}

fn forward(spec: &RadarSpec, layers: &[LayerDef], params: &ParamVec, s: &RadarSample) -> Forward {
    let levels = spec.levels();
    let mut traces = Vec::with_capacity(layers.len());
    let mut pools = Vec::with_capacity(levels);
    let mut skips = Vec::with_capacity(levels);
    let mut idx = 0;
    let mut run = |x: Map, traces: &mut Vec<Trace>| {
        let (a, t) = block_forward(&layers[idx], params, idx, x);
        traces.push(t);
        idx += 1;
        a
    };

    let mut x = input_map(spec, s);
    for _ in 0..levels {
        let a = run(x, &mut traces);
        let e = run(a, &mut traces);
        let (p, arg) = maxpool2_forward(&e);
        pools.push((arg, (e.c, e.h, e.w)));
        skips.push(e);
        x = p;
    }
    let a = run(x, &mut traces);
    let mut d = run(a, &mut traces);
    for _ in 0..levels {
        let skip = skips.pop().expect("one skip per level");
        let up = run(upsample2_forward(&d), &mut traces);
        let a = run(concat_channels(&up, &skip), &mut traces);
        d = run(a, &mut traces);
    }
    let logits = run(d, &mut traces);
    Forward { logits, traces, pools }
}

/// Per-pixel class probabilities, channel-major `classes × size × size`.
pub fn predict_proba(spec: &RadarSpec, params: &ParamVec, s: &RadarSample) -> Map {
    softmax_channels(&forward(spec, &spec.layers(), params, s).logits)
}

/// Arg-max class per pixel.
pub fn predict_labels(spec: &RadarSpec, params: &ParamVec, s: &RadarSample) -> Vec<u8> {
    let p = predict_proba(spec, params, s);
    let plane = p.h * p.w;
    (0..plane)
        .map(|px| {
            (0..p.c)
                .max_by(|&a, &b| {
                    // first maximum wins on ties
                    p.data[a * plane + px].total_cmp(&p.data[b * plane + px]).then(b.cmp(&a))
                })
                .unwrap_or(0) as u8
        })
        .collect()
}

fn cross_entropy(probs: &Map, labels: &[u8]) -> f64 {
    let plane = probs.h * probs.w;
    labels.iter().enumerate().map(|(px, &l)| -(probs.data[l as usize * plane + px].max(f64::MIN_POSITIVE)).ln()).sum()
}

/// Pixel-averaged categorical cross-entropy over the batch, with its gradient.
pub fn loss_and_grad(spec: &RadarSpec, params: &ParamVec, batch: &[&RadarSample]) -> (f64, ParamVec) {
    let layers = spec.layers();
    let levels = spec.levels();
    let mut grads = params.zeros_like();
    let plane = spec.size * spec.size;
    let n = (batch.len() * plane) as f64;
    let mut loss = 0.0;
    for s in batch {
        let f = forward(spec, &layers, params, s);
        let probs = softmax_channels(&f.logits);
        loss += cross_entropy(&probs, &s.labels);
        let mut g = probs;
        for (px, &l) in s.labels.iter().enumerate() {
            g.data[l as usize * plane + px] -= 1.0;
        }
        for v in g.data.iter_mut() {
            *v /= n;
        }

        let mut idx = layers.len();
        let mut back = |g: &Map, grads: &mut ParamVec| {
            idx -= 1;
            block_backward(&layers[idx], params, idx, &f.traces[idx], g, grads)
        };
        let mut gd = back(&g, &mut grads);
        let mut skip_grads = Vec::with_capacity(levels);
        // decoder levels unwind shallowest first
        for l in 0..levels {
            let width = spec.filters[l];
            let ga = back(&gd, &mut grads);
            let gcat = back(&ga, &mut grads);
            let (gup, gskip) = split_channels(&gcat, width);
            let gu = back(&gup, &mut grads);
            gd = upsample2_backward(&gu);
            skip_grads.push(gskip);
        }
        let ga = back(&gd, &mut grads);
        let mut gx = back(&ga, &mut grads);
        for l in (0..levels).rev() {
            let (arg, dims) = &f.pools[l];
            let mut ge = maxpool2_backward(*dims, arg, &gx);
            let gskip = &skip_grads[l];
            for (a, b) in ge.data.iter_mut().zip(&gskip.data) {
                *a += b;
            }
            let ga = back(&ge, &mut grads);
            gx = back(&ga, &mut grads);
        }
    }
    (loss / n, grads)
}

/// Pixel-averaged cross-entropy without gradients.
pub fn loss(spec: &RadarSpec, params: &ParamVec, data: &[RadarSample]) -> f64 {
    let n = (data.len() * spec.size * spec.size) as f64;
    data.iter().map(|s| cross_entropy(&predict_proba(spec, params, s), &s.labels)).sum::<f64>() / n
}
