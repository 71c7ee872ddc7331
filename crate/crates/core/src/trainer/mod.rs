//! Toy multi-exit backbone, the weighted multi-exit objective and its
//! optimisation.

mod cost;
mod gradcheck;
mod loss;
mod model;
#[cfg(test)]
pub(crate) use model::tests::small_config;
mod optim;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Curvature;

pub use cost::{percent_truncated, CostModel};
pub use gradcheck::{check_gradient, check_objective, GradCheckReport, GroupReport, Objective, FD_STEP};
pub use loss::{total_loss, LossConfig, DEFAULT_LAMBDA};
pub use model::{ExitEmbedding, ExitOutput, ExitStream, MultiExitModel, ParamGroup};
pub use optim::{OptimizerConfig, OptimizerKind};
pub use train::{evaluate, train, EpochMetrics, EvalMetrics, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// HypEE: lift to the hyperboloid, Lorentz MLR heads, entailment term.
    Hyperbolic,
    /// EucEE: unit-normalised projection and linear heads.
    Euclidean,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Hyperbolic => "HypEE",
            Mode::Euclidean => "EucEE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub input_dim: usize,
    /// Width of each backbone block.
    pub hidden_dims: Vec<usize>,
    /// Blocks hosting an exit; the last entry must be the last block.
    pub exit_after: Vec<usize>,
    pub latent_dim: usize,
    pub num_classes: usize,
    pub mode: Mode,
    #[serde(default)]
    pub curvature: Curvature,
}

impl BackboneConfig {
    pub fn num_exits(&self) -> usize {
        self.exit_after.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim", "must be positive"));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::invalid("hidden_dims", "need at least one block, all widths positive"));
        }
        if self.exit_after.len() < 2 {
            return Err(Error::invalid("exit_after", "need at least two exits"));
        }
        if self.exit_after.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("exit_after", "must be strictly increasing"));
        }
        if *self.exit_after.last().unwrap() != self.hidden_dims.len() - 1 {
            return Err(Error::invalid("exit_after", "last exit must follow the last block"));
        }
        if self.latent_dim < 2 {
            return Err(Error::invalid("latent_dim", "must be at least 2"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes", "must be at least 2"));
        }
        Ok(())
    }
}
