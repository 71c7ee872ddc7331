//! Lorentz multinomial logistic regression.
//!
//! Class `k` owns a hyperplane with spacelike ambient normal
//! `w_k = (sinh(√c·a_k)·‖d_k‖ ; cosh(√c·a_k)·d_k)` built from a direction
//! `d_k ∈ ℝⁿ` and scalar offset `a_k`. Since `⟨w_k,w_k⟩_L = ‖d_k‖²`, the normal
//! is spacelike exactly when the direction is non-zero. The logit is the signed
//! hyperbolic distance `asinh(√c·⟨w_k,h⟩_L / ‖w_k‖_L) / √c`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Real};
use crate::error::{Error, Result};
use crate::geometry::{Curvature, LorentzPoint};

/// Directions shorter than this are treated as null normals.
pub const MIN_DIRECTION_NORM: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzHyperplane {
    pub direction: Vec<f64>,
    pub offset: f64,
}

impl LorentzHyperplane {
    pub fn new(direction: Vec<f64>, offset: f64) -> Result<Self> {
        if direction.is_empty() {
            return Err(Error::invalid("direction", "empty"));
        }
        if direction.iter().chain([&offset]).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hyperplane parameters"));
        }
        Ok(LorentzHyperplane { direction, offset })
    }

    /// Ambient normal `w`, time-first.
    pub fn normal(&self, c: Curvature) -> Vec<f64> {
        let a = self.offset * c.sqrt();
        let dn = self.direction_norm();
        let mut w = Vec::with_capacity(self.direction.len() + 1);
        w.push(a.sinh() * dn);
        w.extend(self.direction.iter().map(|d| a.cosh() * d));
        w
    }

    pub fn direction_norm(&self) -> f64 {
        self.direction.iter().map(|d| d * d).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlrHead {
    hyperplanes: Vec<LorentzHyperplane>,
    curvature: Curvature,
}

impl MlrHead {
    pub fn new(hyperplanes: Vec<LorentzHyperplane>, curvature: Curvature) -> Result<Self> {
        if hyperplanes.len() < 2 {
            return Err(Error::invalid("hyperplanes", "need at least two classes"));
        }
        let n = hyperplanes[0].direction.len();
        if let Some(bad) = hyperplanes.iter().find(|h| h.direction.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.direction.len(),
            });
        }
        Ok(MlrHead {
            hyperplanes,
            curvature,
        })
    }

    /// Directions drawn from `N(0, 1/n)`, offsets 0.
    pub fn init<R: Rng + ?Sized>(n: usize, classes: usize, c: Curvature, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, 1.0 / (n as f64).sqrt()).expect("valid std");
        let hyperplanes = (0..classes)
            .map(|_| LorentzHyperplane {
                direction: (0..n).map(|_| normal.sample(rng)).collect(),
                offset: 0.0,
            })
            .collect();
        MlrHead::new(hyperplanes, c)
    }

    pub fn hyperplanes(&self) -> &[LorentzHyperplane] {
        &self.hyperplanes
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn num_classes(&self) -> usize {
        self.hyperplanes.len()
    }

    pub fn dim(&self) -> usize {
        self.hyperplanes[0].direction.len()
    }
}

pub fn mlr_logits(h: &LorentzPoint, head: &MlrHead) -> Result<Vec<f64>> {
    if h.dim() != head.dim() {
        return Err(Error::DimensionMismatch {
            expected: head.dim(),
            got: h.dim(),
        });
    }
    let c = head.curvature.get();
    head.hyperplanes
        .iter()
        .enumerate()
        .map(|(k, hp)| {
            if hp.direction_norm() < MIN_DIRECTION_NORM {
                return Err(Error::NullNormal { class: k });
            }
            Ok(kernel::logit(h.time(), h.space(), &hp.direction, hp.offset, c))
        })
        .collect()
}

pub fn predict(h: &LorentzPoint, head: &MlrHead) -> Result<usize> {
    Ok(argmax(&mlr_logits(h, head)?))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Resets null directions in a flat `classes × n` block to a short unit-axis
/// vector. Returns how many were reset.
pub fn project_spacelike(directions: &mut [f64], n: usize) -> usize {
    let mut resets = 0;
    for (k, d) in directions.chunks_mut(n).enumerate() {
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm >= MIN_DIRECTION_NORM) {
            d.iter_mut().for_each(|v| *v = 0.0);
            d[k % n] = 1e-3;
            resets += 1;
        }
    }
    resets
}

pub mod kernel {
    use super::*;

    pub fn logit<T: Real>(ht: T, hs: &[T], direction: &[T], offset: T, c: f64) -> T {
        let sc = c.sqrt();
        let a = offset * sc;
        let dn = autodiff::sum_sq(direction).sqrt();
        let inner = a.cosh() * autodiff::dot(direction, hs) - a.sinh() * dn * ht;
        (inner * sc / dn).asinh() / sc
    }

    /// Logits for a flat `classes × n` direction block.
    pub fn logits<T: Real>(ht: T, hs: &[T], directions: &[T], offsets: &[T], c: f64) -> Vec<T> {
        let n = hs.len();
        offsets
            .iter()
            .enumerate()
            .map(|(k, &a)| logit(ht, hs, &directions[k * n..(k + 1) * n], a, c))
            .collect()
    }
}
