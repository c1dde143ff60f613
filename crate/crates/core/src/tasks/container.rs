//! Flat binary dataset container with a JSON sidecar.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   "QFLD"          4 bytes
//! version u16             currently 1
//! task    u8              0 = channel, 1 = radar
//! pad     u8
//! dims    u32 × 3         channel: H, W, 1   radar: S, S, 3
//! count   u64
//! payload per sample
//!   channel: snr_db f32, |Y| f32 × H·W, |H| f32 × H·W
//!   radar:   spectrogram f32 × 3·S·S (channel-major), labels u8 × S·S
//! ```
//!
//! Values are stored as 32-bit floats; loading widens them back to f64.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::data::{ChannelSample, Dataset, RadarSample, RADAR_CHANNELS};

pub const MAGIC: &[u8; 4] = b"QFLD";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a dataset container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u16),
    #[error("unknown task code {0}")]
    Task(u8),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

/// Generation parameters recorded next to a container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub task: String,
    pub count: usize,
    pub dims: [usize; 3],
    pub seed: u64,
    #[serde(default)]
    pub snr_db: Vec<f64>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn dims_of(data: &Dataset) -> [usize; 3] {
    match data {
        Dataset::Channel(s) => s.first().map_or([0, 0, 1], |x| [x.height, x.width, 1]),
        Dataset::Radar(s) => s.first().map_or([0, 0, 3], |x| [x.size, x.size, RADAR_CHANNELS]),
    }
}

pub fn encode(data: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match data {
        Dataset::Channel(_) => 0,
        Dataset::Radar(_) => 1,
    });
    out.push(0);
    for d in dims_of(data) {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    let put = |v: f64, out: &mut Vec<u8>| out.extend_from_slice(&(v as f32).to_le_bytes());
    match data {
        Dataset::Channel(samples) => {
            for s in samples {
                put(s.snr_db, &mut out);
                s.pilots.iter().for_each(|&v| put(v, &mut out));
                s.truth.iter().for_each(|&v| put(v, &mut out));
            }
        }
        Dataset::Radar(samples) => {
            for s in samples {
                s.spectrogram.iter().for_each(|&v| put(v, &mut out));
                out.extend_from_slice(&s.labels);
            }
        }
    }
    out
}

fn read_array<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_f32s(r: &mut impl Read, n: usize) -> io::Result<Vec<f64>> {
    (0..n).map(|_| Ok(f32::from_le_bytes(read_array(r)?) as f64)).collect()
}

pub fn decode(mut r: impl Read) -> Result<Dataset, ContainerError> {
    if &read_array::<4>(&mut r)? != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(ContainerError::Version(version));
    }
    let [task, _] = read_array::<2>(&mut r)?;
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = u32::from_le_bytes(read_array(&mut r)?) as usize;
    }
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    match task {
        0 => {
            let [h, w, _] = dims;
            let samples = (0..count)
                .map(|_| {
                    let snr_db = f32::from_le_bytes(read_array(&mut r)?) as f64;
                    let pilots = read_f32s(&mut r, h * w)?;
                    let truth = read_f32s(&mut r, h * w)?;
                    Ok(ChannelSample { height: h, width: w, pilots, truth, snr_db })
                })
                .collect::<io::Result<_>>()?;
            Ok(Dataset::Channel(samples))
        }
        1 => {
            let size = dims[0];
            let samples = (0..count)
                .map(|_| {
                    let spectrogram = read_f32s(&mut r, RADAR_CHANNELS * size * size)?;
                    let mut labels = vec![0u8; size * size];
                    r.read_exact(&mut labels)?;
                    Ok(RadarSample { size, spectrogram, labels })
                })
                .collect::<io::Result<_>>()?;
            Ok(Dataset::Radar(samples))
        }
        t => Err(ContainerError::Task(t)),
    }
}

/// Writes the container to `path` and its sidecar next to it.
pub fn save(path: &Path, data: &Dataset, meta: &DatasetMeta) -> Result<(), ContainerError> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    f.write_all(&encode(data))?;
    f.flush()?;
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(meta)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Dataset, DatasetMeta), ContainerError> {
    let data = decode(io::BufReader::new(fs::File::open(path)?))?;
    let meta = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    Ok((data, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::data::{gen_channel_dataset, gen_radar_dataset};

    fn round_f32(v: &[f64]) -> Vec<f64> {
        v.iter().map(|&x| x as f32 as f64).collect()
    }

    #[test]
    fn channel_roundtrip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ch.qfld");
        let samples = gen_channel_dataset(3, 10.0, (8, 14), 1);
        let meta = DatasetMeta { task: "channel".into(), count: 3, dims: [8, 14, 1], seed: 1, snr_db: vec![10.0] };
        save(&path, &Dataset::Channel(samples.clone()), &meta).unwrap();
        let (loaded, m) = load(&path).unwrap();
        assert_eq!(m, meta);
        let Dataset::Channel(got) = loaded else { panic!("wrong task") };
        for (a, b) in samples.iter().zip(&got) {
            assert_eq!(round_f32(&a.pilots), b.pilots);
            assert_eq!(round_f32(&a.truth), b.truth);
        }
    }

    #[test]
    fn radar_header_and_labels() {
        let data = Dataset::Radar(gen_radar_dataset(2, 16, 3));
        let bytes = encode(&data);
        assert_eq!(&bytes[..4], b"QFLD");
        assert_eq!(bytes[4..6], [1, 0]);
        assert_eq!(bytes[6], 1);
        assert_eq!(bytes[8..12], 16u32.to_le_bytes());
        assert_eq!(bytes[20..28], 2u64.to_le_bytes());
        assert_eq!(bytes.len(), 28 + 2 * (3 * 256 * 4 + 256));
        let Dataset::Radar(back) = decode(bytes.as_slice()).unwrap() else { panic!() };
        let Dataset::Radar(orig) = data else { panic!() };
        assert_eq!(back[1].labels, orig[1].labels);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(decode(&b"NOPE\x01\x00"[..]), Err(ContainerError::BadMagic)));
        let mut bytes = encode(&Dataset::Radar(vec![]));
        bytes[4] = 9;
        assert!(matches!(decode(bytes.as_slice()), Err(ContainerError::Version(9))));
    }
}
