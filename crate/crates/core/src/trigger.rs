//! Uncertainty-gated early exit.
//!
//! A reference set yields Gaussian statistics of the gate norm for correct and
//! incorrect predictions at each exit, globally and per predicted class. At
//! inference a sample leaves at the first gate where its norm is more likely
//! under the "correct" density than under the "incorrect" one.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::trainer::{CostModel, ExitOutput, MultiExitModel};

pub const SIGMA_FLOOR: f64 = 1e-3;
pub const MIN_SUPPORT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub sigma_floor: f64,
    /// Minimum correct and incorrect samples for a class to get its own statistics.
    pub min_support: usize,
    /// Accept an exit with an empty global partition; its density is then taken as 0.
    pub allow_missing_partition: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            sigma_floor: SIGMA_FLOOR,
            min_support: MIN_SUPPORT,
            allow_missing_partition: false,
        }
    }
}

/// Population mean and standard deviation (divide by `n`), with σ floored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Gaussian {
    pub fn fit(values: &[f64], sigma_floor: f64) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Gaussian {
            mean,
            std: var.sqrt().max(sigma_floor),
            count: values.len(),
        })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        (-0.5 * z * z).exp() / (self.std * (2.0 * PI).sqrt())
    }
}

/// Normal density `N(x; μ, σ)`.
pub fn gaussian_pdf(x: f64, mean: f64, std: f64) -> Result<f64> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::invalid("std", format!("must be positive, got {std}")));
    }
    Ok(Gaussian { mean, std, count: 0 }.pdf(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub correct: Option<Gaussian>,
    pub incorrect: Option<Gaussian>,
}

impl PartitionStats {
    fn fit(correct: &[f64], incorrect: &[f64], floor: f64) -> Self {
        PartitionStats {
            correct: Gaussian::fit(correct, floor),
            incorrect: Gaussian::fit(incorrect, floor),
        }
    }

    /// `p_correct > p_incorrect`; a missing partition has density 0.
    pub fn passes(&self, x: f64) -> bool {
        let p = |g: &Option<Gaussian>| g.map_or(0.0, |g| g.pdf(x));
        p(&self.correct) > p(&self.incorrect)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: usize,
    pub norm: PartitionStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitStats {
    pub exit: usize,
    pub norm: PartitionStats,
    /// Max-softmax confidence statistics; only used by the combined gate.
    pub confidence: PartitionStats,
    /// Classes meeting the minimum support, keyed by predicted class.
    pub classes: Vec<ClassStats>,
    /// `(correct, incorrect)` counts per predicted class, for every class.
    pub class_counts: Vec<(usize, usize)>,
}

impl ExitStats {
    pub fn class(&self, c: usize) -> Option<&PartitionStats> {
        self.classes
            .binary_search_by_key(&c, |s| s.class)
            .ok()
            .map(|i| &self.classes[i].norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub config: CalibrationConfig,
    pub num_classes: usize,
    pub exits: Vec<ExitStats>,
}

impl NormStats {
    pub fn num_exits(&self) -> usize {
        self.exits.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// What the gate sees of one exit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitObservation {
    pub norm: f64,
    pub predicted: usize,
    /// Largest softmax probability.
    pub confidence: f64,
    /// Softmax entropy in nats.
    pub entropy: f64,
}

impl ExitObservation {
    pub fn from_output(out: &ExitOutput) -> Self {
        let (confidence, entropy) = softmax_stats(&out.logits);
        ExitObservation {
            norm: out.gate_norm(),
            predicted: out.predicted(),
            confidence,
            entropy,
        }
    }
}

/// `(max probability, entropy)` of `softmax(logits)`.
pub fn softmax_stats(logits: &[f64]) -> (f64, f64) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let mut entropy = 0.0;
    let mut best: f64 = 0.0;
    for e in exps {
        let p = e / z;
        best = best.max(p);
        if p > 0.0 {
            entropy -= p * p.ln();
        }
    }
    (best, entropy.max(0.0))
}

/// All exits of one labeled sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleObservation {
    pub label: usize,
    pub exits: Vec<ExitObservation>,
}

pub fn observe(model: &MultiExitModel, data: &Dataset) -> Result<Vec<SampleObservation>> {
    data.features
        .iter()
        .zip(&data.labels)
        .map(|(x, &label)| {
            let exits = model.forward_with_exits(x)?.iter().map(ExitObservation::from_output).collect();
            Ok(SampleObservation { label, exits })
        })
        .collect()
}

/// Fits norm statistics on a labeled reference set.
pub fn calibrate(model: &MultiExitModel, reference: &Dataset, cfg: &CalibrationConfig) -> Result<NormStats> {
    let obs = observe(model, reference)?;
    calibrate_from_observations(&obs, model.config().num_classes, cfg)
}

pub fn calibrate_from_observations(obs: &[SampleObservation], num_classes: usize, cfg: &CalibrationConfig) -> Result<NormStats> {
    if obs.is_empty() {
        return Err(Error::Empty("reference set"));
    }
    if !(cfg.sigma_floor > 0.0) {
        return Err(Error::invalid("sigma_floor", "must be positive"));
    }
    let exits = obs[0].exits.len();
    let mut out = Vec::with_capacity(exits);
    for i in 0..exits {
        let mut norm = [Vec::new(), Vec::new()];
        let mut conf = [Vec::new(), Vec::new()];
        let mut per_class: BTreeMap<usize, [Vec<f64>; 2]> = BTreeMap::new();
        for s in obs {
            if s.exits.len() != exits {
                return Err(Error::DimensionMismatch {
                    expected: exits,
                    got: s.exits.len(),
                });
            }
            let e = &s.exits[i];
            if e.predicted >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: e.predicted,
                    classes: num_classes,
                });
            }
            let k = usize::from(e.predicted != s.label);
            norm[k].push(e.norm);
            conf[k].push(e.confidence);
            per_class.entry(e.predicted).or_default()[k].push(e.norm);
        }
        for (k, partition) in [(0, "correct"), (1, "incorrect")] {
            if norm[k].is_empty() && !cfg.allow_missing_partition {
                return Err(Error::InsufficientReference { exit: i, partition });
            }
        }
        let mut class_counts = vec![(0, 0); num_classes];
        let mut classes = Vec::new();
        for (c, [good, bad]) in &per_class {
            class_counts[*c] = (good.len(), bad.len());
            if good.len() >= cfg.min_support && bad.len() >= cfg.min_support {
                classes.push(ClassStats {
                    class: *c,
                    norm: PartitionStats::fit(good, bad, cfg.sigma_floor),
                });
            }
        }
        out.push(ExitStats {
            exit: i,
            norm: PartitionStats::fit(&norm[0], &norm[1], cfg.sigma_floor),
            confidence: PartitionStats::fit(&conf[0], &conf[1], cfg.sigma_floor),
            classes,
            class_counts,
        });
    }
    Ok(NormStats {
        config: cfg.clone(),
        num_classes,
        exits: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Global gate only.
    GlobalNorm,
    /// Global gate, then the predicted class's gate where it has statistics.
    ClassNorm,
    /// Exit when softmax entropy is below the gate's threshold.
    Entropy { thresholds: Vec<f64> },
    /// Always use one exit.
    Fixed { exit: usize },
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::GlobalNorm => "global_norm".into(),
            Strategy::ClassNorm => "class_norm".into(),
            Strategy::Entropy { .. } => "entropy".into(),
            Strategy::Fixed { exit } => format!("fixed_exit_{exit}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriggerConfig {
    /// Also require the confidence gate to pass (norm AND confidence).
    pub combined_confidence_gate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionReason {
    GlobalPass,
    GlobalAndClassPass,
    GlobalPassNoClassStats,
    EntropyPass,
    Fixed,
    FallthroughFinal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerDecision {
    pub exit_taken: usize,
    pub predicted_class: usize,
    pub reason: DecisionReason,
    /// Gate norm at the exit taken.
    pub norm: f64,
}

fn validate_strategy(strategy: &Strategy, stats: Option<&NormStats>, exits: usize, classes: usize) -> Result<()> {
    match strategy {
        Strategy::GlobalNorm | Strategy::ClassNorm => {
            let stats = stats.ok_or(Error::invalid("stats", "norm strategies need calibrated statistics"))?;
            if stats.num_exits() != exits {
                return Err(Error::DimensionMismatch {
                    expected: exits,
                    got: stats.num_exits(),
                });
            }
        }
        Strategy::Entropy { thresholds } => {
            if thresholds.len() != exits - 1 {
                return Err(Error::DimensionMismatch {
                    expected: exits - 1,
                    got: thresholds.len(),
                });
            }
            let max = (classes as f64).ln();
            if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t < max)) {
                return Err(Error::invalid("thresholds", format!("{t} outside (0, ln C = {max})")));
            }
        }
        Strategy::Fixed { exit } => {
            if *exit >= exits {
                return Err(Error::DimensionMismatch {
                    expected: exits,
                    got: *exit,
                });
            }
        }
    }
    Ok(())
}

/// Runs the gates in order, requesting each exit's observation only when needed.
pub fn decide_with<F>(
    strategy: &Strategy,
    stats: Option<&NormStats>,
    cfg: &TriggerConfig,
    num_exits: usize,
    mut observe: F,
) -> Result<TriggerDecision>
where
    F: FnMut(usize) -> Result<ExitObservation>,
{
    for i in 0..num_exits - 1 {
        let o = observe(i)?;
        let reason = match strategy {
            Strategy::Fixed { exit } => (*exit == i).then_some(DecisionReason::Fixed),
            Strategy::Entropy { thresholds } => (o.entropy < thresholds[i]).then_some(DecisionReason::EntropyPass),
            Strategy::GlobalNorm | Strategy::ClassNorm => {
                let s = &stats.expect("validated").exits[i];
                let global = s.norm.passes(o.norm) && (!cfg.combined_confidence_gate || s.confidence.passes(o.confidence));
                if !global {
                    None
                } else if *strategy == Strategy::GlobalNorm {
                    Some(DecisionReason::GlobalPass)
                } else {
                    match s.class(o.predicted) {
                        None => Some(DecisionReason::GlobalPassNoClassStats),
                        Some(c) if c.passes(o.norm) => Some(DecisionReason::GlobalAndClassPass),
                        Some(_) => None,
                    }
                }
            }
        };
        if let Some(reason) = reason {
            return Ok(TriggerDecision {
                exit_taken: i,
                predicted_class: o.predicted,
                reason,
                norm: o.norm,
            });
        }
    }
    let last = num_exits - 1;
    let o = observe(last)?;
    let reason = match strategy {
        Strategy::Fixed { .. } => DecisionReason::Fixed,
        _ => DecisionReason::FallthroughFinal,
    };
    Ok(TriggerDecision {
        exit_taken: last,
        predicted_class: o.predicted,
        reason,
        norm: o.norm,
    })
}

/// A decision together with the multiply-accumulates actually executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub decision: TriggerDecision,
    pub macs: u64,
}

/// Evaluates exits lazily on `x` until one fires.
pub fn infer(
    model: &MultiExitModel,
    strategy: &Strategy,
    stats: Option<&NormStats>,
    cfg: &TriggerConfig,
    x: &[f64],
) -> Result<Inference> {
    let exits = model.num_exits();
    validate_strategy(strategy, stats, exits, model.config().num_classes)?;
    let mut stream = model.stream(x)?;
    let decision = decide_with(strategy, stats, cfg, exits, |i| {
        debug_assert_eq!(stream.next_exit_index(), i);
        let out = stream.next_exit().expect("exit exists")?;
        Ok(ExitObservation::from_output(&out))
    })?;
    Ok(Inference {
        decision,
        macs: stream.macs(),
    })
}

/// Full two-stage gate with class statistics.
pub fn decide(model: &MultiExitModel, stats: &NormStats, x: &[f64]) -> Result<TriggerDecision> {
    Ok(infer(model, &Strategy::ClassNorm, Some(stats), &TriggerConfig::default(), x)?.decision)
}

/// Entropy-threshold gate.
pub fn entropy_decide(model: &MultiExitModel, thresholds: &[f64], x: &[f64]) -> Result<TriggerDecision> {
    let s = Strategy::Entropy {
        thresholds: thresholds.to_vec(),
    };
    Ok(infer(model, &s, None, &TriggerConfig::default(), x)?.decision)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitReport {
    pub exit: usize,
    pub triggered: usize,
    pub triggered_fraction: f64,
    pub correct: usize,
    /// Of the samples leaving here; 0 when none do.
    pub correct_fraction: f64,
    pub incorrect_fraction: f64,
    pub saved_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerReport {
    pub strategy: String,
    pub samples: usize,
    pub accuracy: f64,
    pub macs_saved_fraction: f64,
    pub exits: Vec<ExitReport>,
}

impl TriggerReport {
    /// Aggregates decisions for labeled samples.
    pub fn from_decisions(strategy: &str, decisions: &[TriggerDecision], labels: &[usize], cost: &CostModel) -> Result<Self> {
        if decisions.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        if decisions.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: decisions.len(),
                got: labels.len(),
            });
        }
        let n = decisions.len();
        let exits = cost.num_exits();
        let mut triggered = vec![0usize; exits];
        let mut correct = vec![0usize; exits];
        for (d, &y) in decisions.iter().zip(labels) {
            if d.exit_taken >= exits {
                return Err(Error::DimensionMismatch {
                    expected: exits,
                    got: d.exit_taken,
                });
            }
            triggered[d.exit_taken] += 1;
            if d.predicted_class == y {
                correct[d.exit_taken] += 1;
            }
        }
        let mut reports = Vec::with_capacity(exits);
        let mut saved = 0.0;
        for i in 0..exits {
            let frac = triggered[i] as f64 / n as f64;
            let s = cost.saved_fraction(i)?;
            saved += frac * s;
            let cf = if triggered[i] > 0 {
                correct[i] as f64 / triggered[i] as f64
            } else {
                0.0
            };
            reports.push(ExitReport {
                exit: i,
                triggered: triggered[i],
                triggered_fraction: frac,
                correct: correct[i],
                correct_fraction: cf,
                incorrect_fraction: if triggered[i] > 0 { 1.0 - cf } else { 0.0 },
                saved_fraction: s,
            });
        }
        Ok(TriggerReport {
            strategy: strategy.to_string(),
            samples: n,
            accuracy: correct.iter().sum::<usize>() as f64 / n as f64,
            macs_saved_fraction: saved,
            exits: reports,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per exit.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "strategy,exit,triggered,triggered_fraction,correct,correct_fraction,incorrect_fraction,accuracy,macs_saved_fraction\n",
        );
        for e in &self.exits {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                self.strategy,
                e.exit,
                e.triggered,
                e.triggered_fraction,
                e.correct,
                e.correct_fraction,
                e.incorrect_fraction,
                self.accuracy,
                self.macs_saved_fraction
            );
        }
        s
    }
}

/// Runs a strategy over a labeled set and reports accuracy, exit mix and savings.
pub fn evaluate_trigger(
    model: &MultiExitModel,
    strategy: &Strategy,
    stats: Option<&NormStats>,
    cfg: &TriggerConfig,
    data: &Dataset,
    cost: &CostModel,
) -> Result<TriggerReport> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let decisions = data
        .features
        .iter()
        .map(|x| infer(model, strategy, stats, cfg, x).map(|i| i.decision))
        .collect::<Result<Vec<_>>>()?;
    TriggerReport::from_decisions(&strategy.label(), &decisions, &data.labels, cost)
}

/// Same as [`evaluate_trigger`] on precomputed observations.
pub fn evaluate_observations(
    obs: &[SampleObservation],
    strategy: &Strategy,
    stats: Option<&NormStats>,
    cfg: &TriggerConfig,
    cost: &CostModel,
) -> Result<TriggerReport> {
    if obs.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let exits = cost.num_exits();
    let classes = stats.map_or(usize::MAX, |s| s.num_classes);
    validate_strategy(strategy, stats, exits, classes)?;
    let decisions = obs
        .iter()
        .map(|s| decide_with(strategy, stats, cfg, exits, |i| Ok(s.exits[i].clone())))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = obs.iter().map(|s| s.label).collect();
    TriggerReport::from_decisions(&strategy.label(), &decisions, &labels, cost)
}

/// Index of the largest logit; re-exported for callers working on raw logits.
pub fn predicted_class(logits: &[f64]) -> usize {
    classifier::argmax(logits)
}
