//! Single-sample layer primitives with hand-written backward passes.
//!
//! Feature maps are channel-major (`[c][h][w]`). Convolution weights are laid
//! out `[out][in][k][k]` and use "same" padding; for even kernels the extra
//! row/column of padding goes after the data.

use serde::{Deserialize, Serialize};

/// A `c × h × w` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Map {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Map {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![0.0; c * h * w] }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w, "map data does not match dims");
        Self { c, h, w, data }
    }

    fn plane(&self) -> usize {
        self.h * self.w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Selu,
    Softplus,
}

const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
const SELU_SCALE: f64 = 1.050_700_987_355_480_5;

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Selu => {
                if z > 0.0 {
                    SELU_SCALE * z
                } else {
                    SELU_SCALE * SELU_ALPHA * z.exp_m1()
                }
            }
            // log(1 + e^z), stable for large |z|
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Selu => {
                if z > 0.0 {
                    SELU_SCALE
                } else {
                    SELU_SCALE * SELU_ALPHA * z.exp()
                }
            }
            Activation::Softplus => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    pub fn forward(self, z: &Map) -> Map {
        Map { data: z.data.iter().map(|&v| self.apply(v)).collect(), ..*z }
    }

    /// Chains `grad_out` through the activation evaluated at `z`.
    pub fn backward(self, z: &Map, grad_out: &Map) -> Map {
        Map { data: z.data.iter().zip(&grad_out.data).map(|(&v, &g)| g * self.derivative(v)).collect(), ..*z }
    }
}

/// Shape of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
}

impl ConvShape {
    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.cout, self.cin, self.k, self.k]
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.k * self.k
    }

    pub fn fan_in(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn pad_before(&self) -> isize {
        ((self.k - 1) / 2) as isize
    }
}

/// Output row/column range `[lo, hi)` for which `i + offset` stays inside `0..n`.
fn valid_range(n: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (n as isize - offset).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

pub fn conv2d_forward(shape: ConvShape, weight: &[f64], bias: &[f64], input: &Map) -> Map {
    debug_assert_eq!(input.c, shape.cin);
    let (h, w) = (input.h, input.w);
    let plane = input.plane();
    let mut out = Map::zeros(shape.cout, h, w);
    let pad = shape.pad_before();
    for co in 0..shape.cout {
        let out_plane = &mut out.data[co * plane..(co + 1) * plane];
        out_plane.fill(bias[co]);
        for ci in 0..shape.cin {
            let in_plane = &input.data[ci * plane..(ci + 1) * plane];
            for ky in 0..shape.k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..shape.k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(w, dx);
                    let wv = weight[((co * shape.cin + ci) * shape.k + ky) * shape.k + kx];
                    for y in y0..y1 {
                        let iy = (y as isize + dy) as usize;
                        let ix0 = (x0 as isize + dx) as usize;
                        let orow = &mut out_plane[y * w + x0..y * w + x1];
                        let irow = &in_plane[iy * w + ix0..iy * w + ix0 + (x1 - x0)];
                        for (o, i) in orow.iter_mut().zip(irow) {
                            *o += wv * i;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a convolution: `(d input, d weight, d bias)`.
pub fn conv2d_backward(shape: ConvShape, weight: &[f64], input: &Map, grad_out: &Map) -> (Map, Vec<f64>, Vec<f64>) {
    let (h, w) = (input.h, input.w);
    let plane = input.plane();
    let pad = shape.pad_before();
    let mut grad_in = Map::zeros(shape.cin, h, w);
    let mut grad_w = vec![0.0; shape.weight_len()];
    let mut grad_b = vec![0.0; shape.cout];
    for (co, gb) in grad_b.iter_mut().enumerate() {
        let g_plane = &grad_out.data[co * plane..(co + 1) * plane];
        *gb = g_plane.iter().sum();
        for ci in 0..shape.cin {
            let in_plane = &input.data[ci * plane..(ci + 1) * plane];
            let gi_plane = &mut grad_in.data[ci * plane..(ci + 1) * plane];
            for ky in 0..shape.k {
                let dy = ky as isize - pad;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..shape.k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = valid_range(w, dx);
                    let widx = ((co * shape.cin + ci) * shape.k + ky) * shape.k + kx;
                    let wv = weight[widx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let iy = (y as isize + dy) as usize;
                        let ix0 = (x0 as isize + dx) as usize;
                        let grow = &g_plane[y * w + x0..y * w + x1];
                        let span = iy * w + ix0..iy * w + ix0 + (x1 - x0);
                        for (g, i) in grow.iter().zip(&in_plane[span.clone()]) {
                            acc += g * i;
                        }
                        for (gi, g) in gi_plane[span].iter_mut().zip(grow) {
                            *gi += wv * g;
                        }
                    }
                    grad_w[widx] += acc;
                }
            }
        }
    }
    (grad_in, grad_w, grad_b)
}

/// 2×2 max pooling with stride 2. Returns the pooled map and, for each output
/// element, the flat index of the winning input element.
pub fn maxpool2_forward(input: &Map) -> (Map, Vec<usize>) {
    let (oh, ow) = (input.h / 2, input.w / 2);
    let mut out = Map::zeros(input.c, oh, ow);
    let mut argmax = vec![0usize; out.data.len()];
    for c in 0..input.c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best_idx = c * input.plane() + 2 * y * input.w + 2 * x;
                let mut best = input.data[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = c * input.plane() + (2 * y + dy) * input.w + 2 * x + dx;
                    if input.data[idx] > best {
                        best = input.data[idx];
                        best_idx = idx;
                    }
                }
                let o = (c * oh + y) * ow + x;
                out.data[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    (out, argmax)
}

pub fn maxpool2_backward(input_dims: (usize, usize, usize), argmax: &[usize], grad_out: &Map) -> Map {
    let (c, h, w) = input_dims;
    let mut g = Map::zeros(c, h, w);
    for (&idx, &v) in argmax.iter().zip(&grad_out.data) {
        g.data[idx] += v;
    }
    g
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2_forward(input: &Map) -> Map {
    let (oh, ow) = (input.h * 2, input.w * 2);
    let mut out = Map::zeros(input.c, oh, ow);
    for c in 0..input.c {
        for y in 0..oh {
            for x in 0..ow {
                out.data[(c * oh + y) * ow + x] = input.data[(c * input.h + y / 2) * input.w + x / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward(grad_out: &Map) -> Map {
    let (h, w) = (grad_out.h / 2, grad_out.w / 2);
    let mut g = Map::zeros(grad_out.c, h, w);
    for c in 0..grad_out.c {
        for y in 0..grad_out.h {
            for x in 0..grad_out.w {
                g.data[(c * h + y / 2) * w + x / 2] += grad_out.data[(c * grad_out.h + y) * grad_out.w + x];
            }
        }
    }
    g
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels(a: &Map, b: &Map) -> Map {
    assert_eq!((a.h, a.w), (b.h, b.w), "concat needs equal spatial dims");
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Map { c: a.c + b.c, h: a.h, w: a.w, data }
}

/// Inverse of [`concat_channels`] for gradients.
pub fn split_channels(g: &Map, first: usize) -> (Map, Map) {
    let cut = first * g.plane();
    (
        Map::from_vec(first, g.h, g.w, g.data[..cut].to_vec()),
        Map::from_vec(g.c - first, g.h, g.w, g.data[cut..].to_vec()),
    )
}

/// Per-pixel softmax over channels.
pub fn softmax_channels(logits: &Map) -> Map {
    let plane = logits.plane();
    let mut out = Map::zeros(logits.c, logits.h, logits.w);
    for p in 0..plane {
        let max = (0..logits.c).map(|c| logits.data[c * plane + p]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..logits.c {
            let e = (logits.data[c * plane + p] - max).exp();
            out.data[c * plane + p] = e;
            sum += e;
        }
        for c in 0..logits.c {
            out.data[c * plane + p] /= sum;
        }
    }
    out
}
