use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{entailment_violation, loss_generic, LossConfig};
use super::model::MultiExitModel;
use super::optim::{Optimizer, OptimizerConfig};
use super::Mode;
use crate::autodiff::{Real, Tape};
use crate::classifier;
use crate::data::Dataset;
use crate::entailment::ConeConfig;
use crate::error::{Error, Result};
use crate::geometry::kernel as geo;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Seeds shuffling and per-batch exit sampling.
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
    /// Cone aperture constant K.
    pub cone_k: f64,
    pub stop_parent_grad: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            loss: LossConfig::default(),
            cone_k: crate::entailment::DEFAULT_K,
            stop_parent_grad: false,
        }
    }
}

impl TrainConfig {
    pub fn cone(&self, model: &MultiExitModel) -> Result<ConeConfig> {
        let mut cone = ConeConfig::new(self.cone_k, model.config().curvature)?;
        cone.stop_parent_grad = self.stop_parent_grad;
        Ok(cone)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean per-sample objective over the epoch, as seen during the updates.
    pub loss: f64,
    pub exit_accuracy: Vec<f64>,
    /// Mean gate norm per exit (spatial norm of `h_i`, or `‖z_i‖` in euclidean mode).
    pub mean_norm: Vec<f64>,
    /// Mean `max(0, ext − aper)` between consecutive exits; hyperbolic mode only.
    pub entailment_violation: Option<f64>,
    /// Cumulative count of null hyperplane directions reset.
    pub spacelike_resets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub samples: usize,
    pub loss: f64,
    pub exit_accuracy: Vec<f64>,
    pub mean_norm: Vec<f64>,
    pub entailment_violation: Option<f64>,
}

struct Accumulator {
    samples: usize,
    loss: f64,
    correct: Vec<usize>,
    norm: Vec<f64>,
    violation: f64,
}

impl Accumulator {
    fn new(exits: usize) -> Self {
        Accumulator {
            samples: 0,
            loss: 0.0,
            correct: vec![0; exits],
            norm: vec![0.0; exits],
            violation: 0.0,
        }
    }

    fn add(&mut self, outs: &[super::model::ExitValues<f64>], label: usize, loss: f64, mode: Mode, cone: &ConeConfig) {
        self.samples += 1;
        self.loss += loss;
        for (i, o) in outs.iter().enumerate() {
            if classifier::argmax(&o.logits) == label {
                self.correct[i] += 1;
            }
            self.norm[i] += match mode {
                Mode::Hyperbolic => geo::norm(&o.embedding),
                Mode::Euclidean => geo::norm(&o.z),
            };
        }
        if mode == Mode::Hyperbolic {
            self.violation += entailment_violation(outs, cone);
        }
    }

    fn finish(&self, mode: Mode) -> (f64, Vec<f64>, Vec<f64>, Option<f64>) {
        let n = self.samples.max(1) as f64;
        (
            self.loss / n,
            self.correct.iter().map(|&c| c as f64 / n).collect(),
            self.norm.iter().map(|s| s / n).collect(),
            (mode == Mode::Hyperbolic).then(|| self.violation / n),
        )
    }
}

fn check_labels(model: &MultiExitModel, data: &Dataset) -> Result<()> {
    let classes = model.config().num_classes;
    if data.input_dim != model.config().input_dim {
        return Err(Error::DimensionMismatch {
            expected: model.config().input_dim,
            got: data.input_dim,
        });
    }
    if let Some(&label) = data.labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Minibatch optimisation of the multi-exit objective.
///
/// Deterministic for a fixed model initialisation, dataset and config.
pub fn train(model: &mut MultiExitModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    check_labels(model, data)?;
    cfg.optimizer.validate()?;
    let exits = model.num_exits();
    cfg.loss.validate(exits)?;
    let weights = cfg.loss.weights(exits)?;
    let positive: Vec<usize> = (0..exits).filter(|&i| weights[i] > 0.0).collect();
    let cone = cfg.cone(model)?;
    let mode = model.mode();
    let lambda = if mode == Mode::Hyperbolic { cfg.loss.lambda } else { 0.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer.clone(), model.params().len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = cfg.optimizer.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut acc = Accumulator::new(exits);
        for batch in order.chunks(cfg.optimizer.batch_size) {
            let batch_weights = if cfg.loss.exit_sampling {
                let pick = positive[rng.random_range(0..positive.len())];
                let mut w = vec![0.0; exits];
                w[pick] = weights[pick];
                w
            } else {
                weights.clone()
            };
            let tape = Tape::with_capacity(model.params().len() * (batch.len() + 1) * 4);
            let pvars = tape.vars(model.params());
            let mut total = pvars[0].constant_like(0.0);
            for &s in batch {
                let label = data.labels[s];
                let outs = model.forward_generic(&pvars, &data.features[s], exits - 1);
                let loss = loss_generic(&outs, label, &batch_weights, lambda, mode, &cone);
                let plain: Vec<_> = outs
                    .iter()
                    .map(|o| super::model::ExitValues {
                        z: o.z.iter().map(|v| v.value()).collect(),
                        embedding: o.embedding.iter().map(|v| v.value()).collect(),
                        logits: o.logits.iter().map(|v| v.value()).collect(),
                    })
                    .collect();
                let finite = plain.iter().all(|o| {
                    geo::norm(&o.z).is_finite() && o.embedding.iter().chain(&o.logits).all(|v| v.is_finite())
                });
                if !finite || !loss.value().is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        step,
                        loss: loss.value(),
                    });
                }
                acc.add(&plain, label, loss.value(), mode, &cone);
                total = total + loss;
            }
            let total = total / batch.len() as f64;
            if !total.value().is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: total.value(),
                });
            }
            let grad = tape.gradient(total).wrt_all(&pvars);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: total.value(),
                });
            }
            drop(pvars);
            opt.step(model.params_mut(), &grad, lr);
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: total.value(),
                });
            }
            model.project_spacelike();
            step += 1;
        }
        let (loss, exit_accuracy, mean_norm, entailment_violation) = acc.finish(mode);
        history.push(EpochMetrics {
            epoch,
            learning_rate: lr,
            loss,
            exit_accuracy,
            mean_norm,
            entailment_violation,
            spacelike_resets: model.spacelike_resets(),
        });
    }
    Ok(TrainOutcome { epochs: history })
}

/// Per-exit accuracy, mean gate norm, loss and cone violation on held-out data.
pub fn evaluate(model: &MultiExitModel, data: &Dataset, loss_cfg: &LossConfig, cone: &ConeConfig) -> Result<EvalMetrics> {
    check_labels(model, data)?;
    let exits = model.num_exits();
    loss_cfg.validate(exits)?;
    let weights = loss_cfg.weights(exits)?;
    let mode = model.mode();
    let mut acc = Accumulator::new(exits);
    for (x, &label) in data.features.iter().zip(&data.labels) {
        let outs = model.forward_generic(model.params(), x, exits - 1);
        let loss = loss_generic(&outs, label, &weights, loss_cfg.lambda, mode, cone);
        acc.add(&outs, label, loss, mode, cone);
    }
    let (loss, exit_accuracy, mean_norm, entailment_violation) = acc.finish(mode);
    Ok(EvalMetrics {
        samples: data.len(),
        loss,
        exit_accuracy,
        mean_norm,
        entailment_violation,
    })
}
