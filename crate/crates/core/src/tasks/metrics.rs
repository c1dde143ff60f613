//! NMSE, pixel accuracy and mean IoU.

use thiserror::Error;

/// Stabilizer in the NMSE denominator.
pub const NMSE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("cannot evaluate an empty dataset")]
    Empty,
    #[error("prediction and target lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// `E‖ŷ − y‖² / (E‖y‖² + ε)` over paired samples.
pub fn nmse<'a>(pairs: impl IntoIterator<Item = (&'a [f64], &'a [f64])>) -> Result<f64, MetricError> {
    let (mut err, mut energy, mut n) = (0.0, 0.0, 0usize);
    for (pred, target) in pairs {
        if pred.len() != target.len() {
            return Err(MetricError::LengthMismatch(pred.len(), target.len()));
        }
        err += pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
        energy += target.iter().map(|t| t * t).sum::<f64>();
        n += 1;
    }
    if n == 0 {
        return Err(MetricError::Empty);
    }
    let n = n as f64;
    Ok((err / n) / (energy / n + NMSE_EPS))
}

/// Pixel counts accumulated over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationCounts {
    pub classes: usize,
    pub correct: u64,
    pub total: u64,
    pub intersection: Vec<u64>,
    pub union: Vec<u64>,
}

impl SegmentationCounts {
    pub fn new(classes: usize) -> Self {
        Self { classes, correct: 0, total: 0, intersection: vec![0; classes], union: vec![0; classes] }
    }

    pub fn add(&mut self, pred: &[u8], truth: &[u8]) -> Result<(), MetricError> {
        if pred.len() != truth.len() {
            return Err(MetricError::LengthMismatch(pred.len(), truth.len()));
        }
        for (&p, &t) in pred.iter().zip(truth) {
            self.total += 1;
            if p == t {
                self.correct += 1;
                self.intersection[p as usize] += 1;
                self.union[p as usize] += 1;
            } else {
                self.union[p as usize] += 1;
                self.union[t as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn accuracy(&self) -> Result<f64, MetricError> {
        if self.total == 0 {
            return Err(MetricError::Empty);
        }
        Ok(self.correct as f64 / self.total as f64)
    }

    /// Mean IoU over classes present in the prediction or the ground truth.
    pub fn miou(&self) -> Result<f64, MetricError> {
        let ious: Vec<f64> = self
            .intersection
            .iter()
            .zip(&self.union)
            .filter(|(_, &u)| u > 0)
            .map(|(&i, &u)| i as f64 / u as f64)
            .collect();
        if ious.is_empty() {
            return Err(MetricError::Empty);
        }
        Ok(ious.iter().sum::<f64>() / ious.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmse_perfect_and_zero_predictors() {
        let y = vec![0.3, 1.2, 0.8];
        assert_eq!(nmse([(y.as_slice(), y.as_slice())]).unwrap(), 0.0);
        let z = vec![0.0; 3];
        let v = nmse([(z.as_slice(), y.as_slice())]).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        assert_eq!(nmse(std::iter::empty()), Err(MetricError::Empty));
    }

    #[test]
    fn nmse_constant_predictor_closed_form() {
        let ys = [vec![0.5, 1.5], vec![2.0, 0.0]];
        let c = 0.7;
        let pred = vec![c; 2];
        let num: f64 = ys.iter().flatten().map(|y| (c - y) * (c - y)).sum::<f64>() / 2.0;
        let den: f64 = ys.iter().flatten().map(|y| y * y).sum::<f64>() / 2.0;
        let got = nmse(ys.iter().map(|y| (pred.as_slice(), y.as_slice()))).unwrap();
        assert!(((got - num / den) / (num / den)).abs() < 1e-9);
    }

    #[test]
    fn toy_segmentation() {
        let mut c = SegmentationCounts::new(4);
        c.add(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(c.accuracy().unwrap(), 0.75);
        assert_eq!(c.intersection[..2], [1, 2]);
        assert_eq!(c.union[..2], [2, 3]);
        assert!((c.miou().unwrap() - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn absent_classes_are_excluded() {
        let mut c = SegmentationCounts::new(4);
        c.add(&[0; 9], &[0; 9]).unwrap();
        assert_eq!((c.accuracy().unwrap(), c.miou().unwrap()), (1.0, 1.0));
        assert!(SegmentationCounts::new(4).accuracy().is_err());
    }
}
