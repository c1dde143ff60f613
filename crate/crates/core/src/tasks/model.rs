//! Model descriptions, parameter initialization, and the convolution +
//! activation block shared by both networks.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::{conv2d_backward, conv2d_forward, Activation, ConvShape, Map};
use crate::params::{ParamVec, Tensor};
use crate::rng::substream_indexed;

/// Three-layer convolutional channel estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub height: usize,
    pub width: usize,
    /// Hidden widths; the network maps 1 → widths[0] → widths[1] → 1.
    pub widths: [usize; 2],
    pub kernels: [usize; 3],
    pub activations: [Activation; 3],
    pub init_seed: u64,
}

impl ChannelSpec {
    /// 48 × 14 grid, widths 12 and 8.
    pub fn desk(init_seed: u64) -> Self {
        Self {
            height: 48,
            width: 14,
            widths: [12, 8],
            kernels: [9, 5, 5],
            activations: [Activation::Selu, Activation::Softplus, Activation::Selu],
            init_seed,
        }
    }

    /// 612 × 14 grid, widths 48 and 16.
    pub fn full(init_seed: u64) -> Self {
        Self { height: 612, widths: [48, 16], ..Self::desk(init_seed) }
    }

    /// Full-width layout with hidden widths multiplied by `factor` (at least 1 each).
    pub fn scaled(factor: f64, height: usize, width: usize, init_seed: u64) -> Self {
        let w = |n: f64| ((n * factor).round() as usize).max(1);
        Self { height, width, widths: [w(48.0), w(16.0)], ..Self::full(init_seed) }
    }

    pub fn layers(&self) -> Vec<LayerDef> {
        let chans = [1, self.widths[0], self.widths[1], 1];
        (0..3)
            .map(|l| LayerDef {
                name: format!("conv{}", l + 1),
                shape: ConvShape { cin: chans[l], cout: chans[l + 1], k: self.kernels[l] },
                act: self.activations[l],
            })
            .collect()
    }
}

/// U-Net style encoder-decoder segmenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarSpec {
    pub size: usize,
    pub in_channels: usize,
    pub classes: usize,
    /// Encoder widths, shallowest first.
    pub filters: Vec<usize>,
    pub bottleneck: usize,
    pub init_seed: u64,
}

impl RadarSpec {
    /// 32 × 32 × 3 input, filters (8, 16, 32) and a 64-wide bottleneck.
    pub fn desk(init_seed: u64) -> Self {
        Self { size: 32, in_channels: 3, classes: 4, filters: vec![8, 16, 32], bottleneck: 64, init_seed }
    }

    /// 256 × 256 × 3 input, filters (64, 128, 256, 512) and a 1024-wide bottleneck.
    pub fn full(init_seed: u64) -> Self {
        Self { size: 256, filters: vec![64, 128, 256, 512], bottleneck: 1024, ..Self::desk(init_seed) }
    }

    /// The full-depth ladder with every width divided by `divisor`.
    pub fn scaled(divisor: usize, size: usize, init_seed: u64) -> Self {
        let p = Self::full(init_seed);
        Self {
            size,
            filters: p.filters.iter().map(|f| (f / divisor).max(1)).collect(),
            bottleneck: (p.bottleneck / divisor).max(1),
            ..p
        }
    }

    pub fn levels(&self) -> usize {
        self.filters.len()
    }

    /// Layers in canonical order: encoder blocks, bottleneck, decoder blocks
    /// (deepest first), then the 1×1 classifier head.
    pub fn layers(&self) -> Vec<LayerDef> {
        let relu = Activation::Relu;
        let def = |name: String, cin, cout, k, act| LayerDef { name, shape: ConvShape { cin, cout, k }, act };
        let mut out = Vec::new();
        let mut cin = self.in_channels;
        for (l, &f) in self.filters.iter().enumerate() {
            out.push(def(format!("enc{l}.conv_a"), cin, f, 3, relu));
            out.push(def(format!("enc{l}.conv_b"), f, f, 3, relu));
            cin = f;
        }
        out.push(def("bottleneck.conv_a".into(), cin, self.bottleneck, 3, relu));
        out.push(def("bottleneck.conv_b".into(), self.bottleneck, self.bottleneck, 3, relu));
        let mut below = self.bottleneck;
        for (l, &f) in self.filters.iter().enumerate().rev() {
            out.push(def(format!("dec{l}.up"), below, f, 2, relu));
            out.push(def(format!("dec{l}.conv_a"), 2 * f, f, 3, relu));
            out.push(def(format!("dec{l}.conv_b"), f, f, 3, relu));
            below = f;
        }
        out.push(def("head".into(), below, self.classes, 1, Activation::Identity));
        out
    }
}

/// Either task's architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum ModelSpec {
    Channel(ChannelSpec),
    Radar(RadarSpec),
}

impl ModelSpec {
    pub fn layers(&self) -> Vec<LayerDef> {
        match self {
            ModelSpec::Channel(s) => s.layers(),
            ModelSpec::Radar(s) => s.layers(),
        }
    }

    pub fn init_seed(&self) -> u64 {
        match self {
            ModelSpec::Channel(s) => s.init_seed,
            ModelSpec::Radar(s) => s.init_seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let check_k = |l: &LayerDef| {
            if l.shape.k == 0 || l.shape.cin == 0 || l.shape.cout == 0 {
                Err(format!("layer {} has a zero dimension", l.name))
            } else {
                Ok(())
            }
        };
        for l in self.layers() {
            check_k(&l)?;
        }
        match self {
            ModelSpec::Channel(s) if s.height == 0 || s.width == 0 => Err("empty channel grid".into()),
            ModelSpec::Radar(s) if s.filters.is_empty() => Err("radar model needs at least one level".into()),
            ModelSpec::Radar(s) if s.size == 0 || s.size % (1 << s.levels()) != 0 => {
                Err(format!("radar input size {} must be a positive multiple of {}", s.size, 1 << s.levels()))
            }
            _ => Ok(()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.shape.weight_len() + l.shape.cout).sum()
    }

    /// Truncated-normal fan-in initialization (cut at two standard
    /// deviations), zero biases. He scaling for ReLU layers, LeCun otherwise.
    pub fn init_params(&self) -> ParamVec {
        let mut entries = Vec::new();
        for (idx, layer) in self.layers().iter().enumerate() {
            let mut rng = substream_indexed(self.init_seed(), "init", &[idx as u64]);
            let gain = if layer.act == Activation::Relu { 2.0 } else { 1.0 };
            let std = (gain / layer.shape.fan_in() as f64).sqrt();
            let weights = (0..layer.shape.weight_len())
                .map(|_| loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if z.abs() <= 2.0 {
                        break std * z;
                    }
                })
                .collect();
            entries.push(Tensor {
                name: format!("{}.weight", layer.name),
                shape: layer.shape.weight_shape(),
                data: weights,
            });
            entries.push(Tensor::zeros(format!("{}.bias", layer.name), vec![layer.shape.cout]));
        }
        ParamVec::new(entries).expect("generated parameters are well formed")
    }

    /// Checks that `params` has exactly this model's tensors.
    pub fn check_params(&self, params: &ParamVec) -> Result<(), crate::params::ParamError> {
        self.init_params_shapes().check_same_structure(params)
    }

    fn init_params_shapes(&self) -> ParamVec {
        let entries = self
            .layers()
            .iter()
            .flat_map(|l| {
                [
                    Tensor::zeros(format!("{}.weight", l.name), l.shape.weight_shape()),
                    Tensor::zeros(format!("{}.bias", l.name), vec![l.shape.cout]),
                ]
            })
            .collect();
        ParamVec::new(entries).expect("generated parameters are well formed")
    }
}

/// One convolution followed by an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDef {
    pub name: String,
    pub shape: ConvShape,
    pub act: Activation,
}

/// What the backward pass needs from a block's forward pass.
pub(crate) struct Trace {
    input: Map,
    pre_activation: Map,
}

/// Runs block `idx`; its weight and bias are entries `2·idx` and `2·idx + 1`.
pub(crate) fn block_forward(layer: &LayerDef, params: &ParamVec, idx: usize, input: Map) -> (Map, Trace) {
    let e = params.entries();
    let z = conv2d_forward(layer.shape, &e[2 * idx].data, &e[2 * idx + 1].data, &input);
    let a = layer.act.forward(&z);
    (a, Trace { input, pre_activation: z })
}

/// Accumulates the block's parameter gradients into `grads` and returns the
/// gradient with respect to the block input.
pub(crate) fn block_backward(
    layer: &LayerDef,
    params: &ParamVec,
    idx: usize,
    trace: &Trace,
    grad_out: &Map,
    grads: &mut ParamVec,
) -> Map {
    let gz = layer.act.backward(&trace.pre_activation, grad_out);
    let (gin, gw, gb) = conv2d_backward(layer.shape, &params.entries()[2 * idx].data, &trace.input, &gz);
    let e = grads.entries_mut();
    for (a, b) in e[2 * idx].data.iter_mut().zip(&gw) {
        *a += b;
    }
    for (a, b) in e[2 * idx + 1].data.iter_mut().zip(&gb) {
        *a += b;
    }
    gin
}
