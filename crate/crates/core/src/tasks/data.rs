//! Procedural datasets for the two tasks.
//!
//! Channel samples follow `Y = X·H + Z` on an OFDM pilot grid: unit-magnitude
//! QPSK pilots, a multipath channel whose every entry is marginally
//! `CN(0, 1)`, and complex Gaussian noise at the requested SNR. The model sees
//! `|Y|` and predicts `|H|`.
//!
//! Radar samples are painted spectrograms: a Gaussian noise floor, up to two
//! horizontal LTE/NR bands, and up to two short, bright radar pulses, with the
//! label map following exactly what was painted.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{substream_indexed, SimRng};

/// Class codes of the radar label map.
pub const NOISE: u8 = 0;
pub const LTE: u8 = 1;
pub const NR: u8 = 2;
pub const RADAR: u8 = 3;
pub const RADAR_CLASSES: usize = 4;
pub const RADAR_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSample {
    pub height: usize,
    pub width: usize,
    /// `|Y|`, row-major `height × width`.
    pub pilots: Vec<f64>,
    /// `|H|`, row-major `height × width`.
    pub truth: Vec<f64>,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSample {
    pub size: usize,
    /// Channel-major `3 × size × size`.
    pub spectrogram: Vec<f64>,
    /// Row-major `size × size` class codes.
    pub labels: Vec<u8>,
}

/// A task's samples.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Channel(Vec<ChannelSample>),
    Radar(Vec<RadarSample>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Channel(s) => s.len(),
            Dataset::Radar(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        match self {
            Dataset::Channel(s) => Dataset::Channel(indices.iter().map(|&i| s[i].clone()).collect()),
            Dataset::Radar(s) => Dataset::Radar(indices.iter().map(|&i| s[i].clone()).collect()),
        }
    }

    /// Grouping key used for skewed partitions: the SNR for channel samples,
    /// the dominant non-noise class for radar samples.
    pub fn skew_key(&self, i: usize) -> i64 {
        match self {
            Dataset::Channel(s) => (s[i].snr_db * 1000.0).round() as i64,
            Dataset::Radar(s) => {
                let mut counts = [0usize; RADAR_CLASSES];
                for &l in &s[i].labels {
                    counts[l as usize] += 1;
                }
                (1..RADAR_CLASSES)
                    .filter(|&c| counts[c] > 0)
                    .max_by_key(|&c| (counts[c], std::cmp::Reverse(c)))
                    .unwrap_or(0) as i64
            }
        }
    }
}

fn complex_normal(rng: &mut SimRng, variance: f64) -> (f64, f64) {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    (s * re, s * im)
}

const CHANNEL_TAPS: usize = 4;
/// Largest per-tap Doppler shift, in cycles per OFDM symbol.
const MAX_DOPPLER: f64 = 0.05;

/// One channel realization, row-major `height × width`, as `(re, im)` pairs.
fn channel_realization(rng: &mut SimRng, height: usize, width: usize) -> Vec<(f64, f64)> {
    let max_delay = (height / 8).max(1);
    let raw: Vec<f64> = (0..CHANNEL_TAPS).map(|p| (-(p as f64) / 2.0).exp()).collect();
    let total: f64 = raw.iter().sum();
    let taps: Vec<(f64, f64, f64, f64)> = raw
        .iter()
        .map(|&p| {
            let (gr, gi) = complex_normal(rng, p / total);
            let delay = rng.gen_range(0..=max_delay) as f64;
            let doppler = rng.gen_range(-MAX_DOPPLER..=MAX_DOPPLER);
            (gr, gi, delay, doppler)
        })
        .collect();
    let mut h = Vec::with_capacity(height * width);
    for n in 0..height {
        for m in 0..width {
            let (mut re, mut im) = (0.0, 0.0);
            for &(gr, gi, delay, doppler) in &taps {
                let phase = 2.0 * PI * (doppler * m as f64 - delay * n as f64 / height as f64);
                let (s, c) = phase.sin_cos();
                re += gr * c - gi * s;
                im += gr * s + gi * c;
            }
            h.push((re, im));
        }
    }
    h
}

/// `n` pilot observations at `snr_db` (use `f64::INFINITY` for a noiseless channel).
pub fn gen_channel_dataset(n: usize, snr_db: f64, dims: (usize, usize), seed: u64) -> Vec<ChannelSample> {
    let (height, width) = dims;
    let noise_var = 10f64.powf(-snr_db / 10.0);
    (0..n)
        .map(|i| {
            let mut rng = substream_indexed(seed, "channel-sample", &[i as u64]);
            let h = channel_realization(&mut rng, height, width);
            let mut pilots = Vec::with_capacity(h.len());
            let mut truth = Vec::with_capacity(h.len());
            for &(hr, hi) in &h {
                let phase = PI / 4.0 + PI / 2.0 * rng.gen_range(0..4) as f64;
                let (xs, xc) = phase.sin_cos();
                let (zr, zi) = complex_normal(&mut rng, noise_var);
                let yr = xc * hr - xs * hi + zr;
                let yi = xc * hi + xs * hr + zi;
                pilots.push(yr.hypot(yi));
                truth.push(hr.hypot(hi));
            }
            ChannelSample { height, width, pilots, truth, snr_db }
        })
        .collect()
}

/// A horizontal band of communication energy over rows `[row, row + height)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub class: u8,
    pub row: usize,
    pub height: usize,
}

/// A radar pulse occupying a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub row: usize,
    pub height: usize,
    pub col: usize,
    pub width: usize,
}

/// Everything painted onto one spectrogram.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RadarScene {
    pub bands: Vec<Band>,
    pub pulses: Vec<Pulse>,
}

impl RadarScene {
    fn sample(rng: &mut SimRng, size: usize) -> Self {
        let band_h = |rng: &mut SimRng| rng.gen_range(size / 8..=size / 4);
        let u: f64 = rng.gen();
        let bands = if u < 0.1 {
            vec![]
        } else if u < 0.3 {
            let height = band_h(rng);
            let class = if rng.gen() { LTE } else { NR };
            vec![Band { class, row: rng.gen_range(0..=size - height), height }]
        } else {
            // one of each, in opposite halves of the band
            let (first, second) = if rng.gen() { (LTE, NR) } else { (NR, LTE) };
            let half = size / 2;
            let h1 = band_h(rng);
            let h2 = band_h(rng);
            vec![
                Band { class: first, row: rng.gen_range(0..=half - h1), height: h1 },
                Band { class: second, row: half + rng.gen_range(0..=half - h2), height: h2 },
            ]
        };
        let u: f64 = rng.gen();
        let n_pulses = if u < 0.1 {
            0
        } else if u < 0.5 {
            1
        } else {
            2
        };
        let pulses = (0..n_pulses)
            .map(|_| {
                let height = rng.gen_range(size / 4..=size / 2);
                let width = rng.gen_range(1..=(size / 16).max(1));
                Pulse { row: rng.gen_range(0..=size - height), height, col: rng.gen_range(0..=size - width), width }
            })
            .collect();
        Self { bands, pulses }
    }

    /// Renders the scene over a noise floor drawn from `rng`.
    pub fn render(&self, rng: &mut SimRng, size: usize) -> RadarSample {
        let plane = size * size;
        let mut spec: Vec<f64> =
            (0..RADAR_CHANNELS * plane).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut labels = vec![NOISE; plane];
        for band in &self.bands {
            let (weights, period) = match band.class {
                LTE => ([1.0, 0.6, 0.2], 4.0),
                _ => ([1.0, 0.2, 0.6], 7.0),
            };
            let level = rng.gen_range(0.6..1.0);
            for y in band.row..band.row + band.height {
                for x in 0..size {
                    let texture = level * (1.0 + 0.3 * (2.0 * PI * x as f64 / period).cos());
                    for (c, w) in weights.iter().enumerate() {
                        spec[c * plane + y * size + x] += w * texture;
                    }
                    labels[y * size + x] = band.class;
                }
            }
        }
        for p in &self.pulses {
            let level = rng.gen_range(2.0..3.0);
            for y in p.row..p.row + p.height {
                for x in p.col..p.col + p.width {
                    for (c, w) in [1.0, 0.8, 0.8].iter().enumerate() {
                        spec[c * plane + y * size + x] += w * level;
                    }
                    labels[y * size + x] = RADAR;
                }
            }
        }
        RadarSample { size, spectrogram: spec, labels }
    }
}

/// `n` painted spectrograms of side `size` (at least 16).
pub fn gen_radar_dataset(n: usize, size: usize, seed: u64) -> Vec<RadarSample> {
    assert!(size >= 16, "radar spectrograms must be at least 16 pixels wide");
    (0..n)
        .map(|i| {
            let mut rng = substream_indexed(seed, "radar-sample", &[i as u64]);
            RadarScene::sample(&mut rng, size).render(&mut rng, size)
        })
        .collect()
}
