use serde::{Deserialize, Serialize};

use super::model::{ExitEmbedding, ExitOutput, ExitValues};
use super::Mode;
use crate::autodiff::{self, Real};
use crate::entailment::{kernel as cone, ConeConfig};
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Per-exit classification weights; empty means 1 for every exit.
    pub exit_weights: Vec<f64>,
    /// Entailment weight λ; ignored in euclidean mode.
    pub lambda: f64,
    /// Train one uniformly drawn exit per batch instead of the joint sum.
    pub exit_sampling: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            exit_weights: Vec::new(),
            lambda: DEFAULT_LAMBDA,
            exit_sampling: false,
        }
    }
}

impl LossConfig {
    pub fn weights(&self, exits: usize) -> Result<Vec<f64>> {
        if self.exit_weights.is_empty() {
            return Ok(vec![1.0; exits]);
        }
        if self.exit_weights.len() != exits {
            return Err(Error::DimensionMismatch {
                expected: exits,
                got: self.exit_weights.len(),
            });
        }
        Ok(self.exit_weights.clone())
    }

    pub fn validate(&self, exits: usize) -> Result<()> {
        let w = self.weights(exits)?;
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("exit_weights", "must be finite and nonnegative"));
        }
        if !w.iter().any(|v| *v > 0.0) {
            return Err(Error::invalid("exit_weights", "at least one weight must be positive"));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::invalid("lambda", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Weighted cross-entropy over exits plus `λ` times the entailment of each
/// exit in the one before it. Terms with zero weight are skipped.
pub(crate) fn loss_generic<T: Real>(
    outs: &[ExitValues<T>],
    label: usize,
    weights: &[f64],
    lambda: f64,
    mode: Mode,
    cone_cfg: &ConeConfig,
) -> T {
    let mut total = outs[0].logits[0].constant_like(0.0);
    for (o, &w) in outs.iter().zip(weights) {
        if w != 0.0 {
            total = total + autodiff::cross_entropy(&o.logits, label) * w;
        }
    }
    if mode == Mode::Hyperbolic && lambda != 0.0 {
        for pair in outs.windows(2) {
            total = total + cone::entailment_loss(&pair[0].embedding, &pair[1].embedding, cone_cfg) * lambda;
        }
    }
    total
}

/// Mean pairwise entailment violation `max(0, ext − aper)` between consecutive exits.
pub(crate) fn entailment_violation(outs: &[ExitValues<f64>], cone_cfg: &ConeConfig) -> f64 {
    let pairs = outs.len() - 1;
    outs.windows(2)
        .map(|p| cone::entailment_loss(&p[0].embedding, &p[1].embedding, cone_cfg))
        .sum::<f64>()
        / pairs as f64
}

/// Total objective for one sample from already computed exit outputs.
pub fn total_loss(outputs: &[ExitOutput], label: usize, cfg: &LossConfig, cone_cfg: &ConeConfig) -> Result<f64> {
    if outputs.is_empty() {
        return Err(Error::Empty("exit outputs"));
    }
    let classes = outputs[0].logits.len();
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    cfg.validate(outputs.len())?;
    let mode = match outputs[0].embedding {
        ExitEmbedding::Hyperbolic(_) => Mode::Hyperbolic,
        ExitEmbedding::Euclidean(_) => Mode::Euclidean,
    };
    let values: Vec<ExitValues<f64>> = outputs
        .iter()
        .map(|o| ExitValues {
            z: o.z.clone(),
            embedding: o.space().to_vec(),
            logits: o.logits.clone(),
        })
        .collect();
    let loss = loss_generic(&values, label, &cfg.weights(outputs.len())?, cfg.lambda, mode, cone_cfg);
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok(loss)
}
