use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Stochastic gradient descent with heavy-ball momentum.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Multiply the learning rate by `decay_factor` every `decay_every` epochs; 0 disables.
    pub decay_every: usize,
    pub decay_factor: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 0.01,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            decay_every: 10,
            decay_factor: 0.5,
            batch_size: 32,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("beta", "must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay", "must be nonnegative"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::invalid("decay_factor", "must lie in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.decay_every == 0 {
            return self.learning_rate;
        }
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Optimizer {
    cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: usize) -> Self {
        Optimizer {
            cfg,
            m: vec![0.0; params],
            v: vec![0.0; params],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.steps += 1;
        let wd = self.cfg.weight_decay;
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                let mu = self.cfg.momentum;
                for ((p, &g), m) in params.iter_mut().zip(grad).zip(&mut self.m) {
                    let g = g + wd * *p;
                    *m = mu * *m + g;
                    *p -= lr * *m;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
                let c1 = 1.0 - b1.powi(self.steps as i32);
                let c2 = 1.0 - b2.powi(self.steps as i32);
                for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    let g = g + wd * *p;
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.cfg.eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimise(kind: OptimizerKind) -> f64 {
        let cfg = OptimizerConfig {
            kind,
            learning_rate: 0.05,
            decay_every: 0,
            ..OptimizerConfig::default()
        };
        let mut opt = Optimizer::new(cfg, 2);
        let mut p = vec![3.0, -2.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.0), 8.0 * (p[1] + 0.5)];
            opt.step(&mut p, &g, 0.05);
        }
        (p[0] - 1.0).abs() + (p[1] + 0.5).abs()
    }

    #[test]
    fn both_optimisers_reach_quadratic_minimum() {
        assert!(minimise(OptimizerKind::Sgd) < 1e-6);
        assert!(minimise(OptimizerKind::Adam) < 1e-3);
    }

    #[test]
    fn step_decay_schedule() {
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            decay_every: 3,
            decay_factor: 0.5,
            ..OptimizerConfig::default()
        };
        assert_eq!(cfg.learning_rate_at(0), 0.1);
        assert_eq!(cfg.learning_rate_at(2), 0.1);
        assert_eq!(cfg.learning_rate_at(3), 0.05);
        assert_eq!(cfg.learning_rate_at(7), 0.025);
    }

    #[test]
    fn invalid_configs() {
        let bad = OptimizerConfig {
            learning_rate: -1.0,
            ..OptimizerConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig {
            batch_size: 0,
            ..OptimizerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
