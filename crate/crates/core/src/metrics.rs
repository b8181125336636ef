//! Prediction metrics.

use ndarray::ArrayView2;

const P_FLOOR: f64 = 1e-12;

/// Mean binary cross-entropy over every entry (nats per unit).
pub fn cross_entropy(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
    assert_eq!(pred.dim(), target.dim(), "prediction/target shape mismatch");
    let n = pred.len();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(&p, &t)| {
            let p = p.clamp(P_FLOOR, 1.0 - P_FLOOR);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    total / n as f64
}

/// Fraction of units where the thresholded prediction equals the target bit.
/// A marginal of exactly 0.5 is always counted as wrong.
pub fn correct_ratio(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
    assert_eq!(pred.dim(), target.dim(), "prediction/target shape mismatch");
    let n = pred.len();
    if n == 0 {
        return 0.0;
    }
    let hits = pred
        .iter()
        .zip(target.iter())
        .filter(|(&p, &t)| p != 0.5 && (p > 0.5) == (t > 0.5))
        .count();
    hits as f64 / n as f64
}

/// Running totals for averaging metrics over many sequences.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct MetricAccumulator {
    ce_sum: f64,
    hits: f64,
    units: usize,
}

impl MetricAccumulator {
    pub fn add(&mut self, pred: ArrayView2<f64>, target: ArrayView2<f64>) {
        let n = pred.len();
        self.ce_sum += cross_entropy(pred, target) * n as f64;
        self.hits += correct_ratio(pred, target) * n as f64;
        self.units += n;
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn error(&self) -> f64 {
        if self.units == 0 {
            0.0
        } else {
            self.ce_sum / self.units as f64
        }
    }

    pub fn correct_ratio(&self) -> f64 {
        if self.units == 0 {
            0.0
        } else {
            self.hits / self.units as f64
        }
    }
}
