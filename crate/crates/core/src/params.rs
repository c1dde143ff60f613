//! Named parameter tensors: the unit that is trained, masked and averaged.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("tensor `{name}` has {len} values but shape {shape:?}")]
    ShapeMismatch { name: String, shape: Vec<usize>, len: usize },
    #[error("tensor `{0}` holds a non-finite value")]
    NonFinite(String),
    #[error("parameter structures differ: {0}")]
    StructureMismatch(String),
}

/// A dense row-major tensor with a name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name: name.into(), shape, data: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered list of named tensors in canonical (declaration) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVec {
    entries: Vec<Tensor>,
}

impl ParamVec {
    pub fn new(entries: Vec<Tensor>) -> Result<Self, ParamError> {
        let mut seen = std::collections::HashSet::new();
        for t in &entries {
            if !seen.insert(t.name.as_str()) {
                return Err(ParamError::DuplicateName(t.name.clone()));
            }
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(ParamError::ShapeMismatch {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    len: t.data.len(),
                });
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(ParamError::NonFinite(t.name.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Tensor] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Tensor] {
        &mut self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|t| t.name == name)
    }

    pub fn total_len(&self) -> usize {
        self.entries.iter().map(Tensor::len).sum()
    }

    /// Size of one serialized transfer (64-bit floats, no metadata).
    pub fn byte_len(&self) -> u64 {
        8 * self.total_len() as u64
    }

    pub fn zeros_like(&self) -> Self {
        Self { entries: self.entries.iter().map(|t| Tensor::zeros(t.name.clone(), t.shape.clone())).collect() }
    }

    /// Values flattened in canonical order, row-major within tensors.
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().flat_map(|t| t.data.iter().copied())
    }

    pub fn to_flat_vec(&self) -> Vec<f64> {
        self.flat().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.flat().all(f64::is_finite)
    }

    /// Checks that names, shapes and order agree.
    pub fn check_same_structure(&self, other: &Self) -> Result<(), ParamError> {
        if self.entries.len() != other.entries.len() {
            return Err(ParamError::StructureMismatch(format!(
                "{} tensors vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name || a.shape != b.shape {
                return Err(ParamError::StructureMismatch(format!(
                    "`{}` {:?} vs `{}` {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(())
    }

    /// Element-wise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self, ParamError> {
        self.check_same_structure(other)?;
        let mut out = self.clone();
        for (t, o) in out.entries.iter_mut().zip(&other.entries) {
            for (x, y) in t.data.iter_mut().zip(&o.data) {
                *x -= y;
            }
        }
        Ok(out)
    }

    /// Largest absolute element-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, ParamError> {
        self.check_same_structure(other)?;
        Ok(self.flat().zip(other.flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.flat().map(f64::abs).fold(0.0, f64::max)
    }

    /// Element-wise mean of structurally identical vectors, summed in slice order.
    pub fn mean_of(items: &[&ParamVec]) -> Result<Self, ParamError> {
        let first = items.first().ok_or_else(|| ParamError::StructureMismatch("nothing to average".into()))?;
        let mut out = first.zeros_like();
        for p in items {
            out.check_same_structure(p)?;
            for (t, s) in out.entries.iter_mut().zip(&p.entries) {
                for (x, y) in t.data.iter_mut().zip(&s.data) {
                    *x += y;
                }
            }
        }
        let k = items.len() as f64;
        for t in out.entries.iter_mut() {
            for x in t.data.iter_mut() {
                *x /= k;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(vals: &[(&str, Vec<usize>, Vec<f64>)]) -> ParamVec {
        ParamVec::new(
            vals.iter().map(|(n, s, d)| Tensor { name: n.to_string(), shape: s.clone(), data: d.clone() }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_invalid_entries() {
        let t = |n: &str| Tensor::zeros(n, vec![2]);
        assert_eq!(ParamVec::new(vec![t("a"), t("a")]), Err(ParamError::DuplicateName("a".into())));
        let bad = Tensor { name: "w".into(), shape: vec![2, 2], data: vec![0.0; 3] };
        assert!(matches!(ParamVec::new(vec![bad]), Err(ParamError::ShapeMismatch { .. })));
        let nan = Tensor { name: "w".into(), shape: vec![1], data: vec![f64::NAN] };
        assert_eq!(ParamVec::new(vec![nan]), Err(ParamError::NonFinite("w".into())));
    }

    #[test]
    fn flatten_order_and_sizes() {
        let p = pv(&[("w", vec![2, 2], vec![1., 2., 3., 4.]), ("b", vec![1], vec![5.])]);
        assert_eq!(p.total_len(), 5);
        assert_eq!(p.byte_len(), 40);
        assert_eq!(p.to_flat_vec(), vec![1., 2., 3., 4., 5.]);
    }

    #[test]
    fn mean_and_diff() {
        let a = pv(&[("x", vec![1], vec![1.0])]);
        let b = pv(&[("x", vec![1], vec![3.0])]);
        let m = ParamVec::mean_of(&[&a, &b]).unwrap();
        assert_eq!(m.to_flat_vec(), vec![2.0]);
        assert_eq!(a.max_abs_diff(&b).unwrap(), 2.0);
        let c = pv(&[("y", vec![1], vec![3.0])]);
        assert!(a.sub(&c).is_err());
    }
}
