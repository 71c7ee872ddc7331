//! End-to-end runs on synthetic data: training, mode comparison, trigger
//! evaluation, λ sweep and latent-dimension ablation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::geometry::Curvature;
use crate::trainer::{evaluate, train, BackboneConfig, CostModel, EvalMetrics, Mode, MultiExitModel, TrainConfig, TrainOutcome};
use crate::trigger::{calibrate, evaluate_trigger, CalibrationConfig, NormStats, Strategy, TriggerConfig, TriggerReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub hidden_dims: Vec<usize>,
    pub exit_after: Vec<usize>,
    pub latent_dim: usize,
    pub curvature: f64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            hidden_dims: vec![32, 32, 32],
            exit_after: vec![0, 1, 2],
            latent_dim: 16,
            curvature: 1.0,
        }
    }
}

/// Fractions of the generated set used for training and for calibration; the rest is test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: f64,
    pub reference: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train: 0.6, reference: 0.2 }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train > 0.0 && self.reference > 0.0 && self.train + self.reference < 1.0) {
            return Err(Error::invalid("split", "train and reference must be positive and sum below 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: SyntheticSpec,
    pub architecture: ArchitectureConfig,
    pub train: TrainConfig,
    pub calibration: CalibrationConfig,
    pub trigger: TriggerConfig,
    pub split: SplitConfig,
    /// One run per seed; the seed drives data, split, initialisation and training.
    pub seeds: Vec<u64>,
    /// Per-gate entropy thresholds; the entropy strategy is skipped when empty.
    pub entropy_thresholds: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: SyntheticSpec::default(),
            architecture: ArchitectureConfig::default(),
            train: TrainConfig::default(),
            calibration: CalibrationConfig::default(),
            trigger: TriggerConfig::default(),
            split: SplitConfig::default(),
            seeds: vec![0, 1, 2],
            entropy_thresholds: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// Settings used for the directional checks: λ = 1 and K = 1 keep the
    /// cones wide enough at trained norms for the entailment term to stay active.
    pub fn directional() -> Self {
        let mut cfg = ExperimentConfig {
            data: SyntheticSpec {
                samples_per_class: 200,
                ..SyntheticSpec::default()
            },
            // Per-class gate stats need 5 wrong predictions per class in the reference split.
            split: SplitConfig { train: 0.45, reference: 0.4 },
            ..ExperimentConfig::default()
        };
        cfg.train.epochs = 120;
        cfg.train.loss.lambda = 1.0;
        cfg.train.cone_k = 1.0;
        cfg.train.optimizer.learning_rate = 0.01;
        cfg.train.optimizer.decay_every = 20;
        cfg
    }

    pub fn backbone(&self, mode: Mode) -> Result<BackboneConfig> {
        let cfg = BackboneConfig {
            input_dim: self.data.input_dim,
            hidden_dims: self.architecture.hidden_dims.clone(),
            exit_after: self.architecture.exit_after.clone(),
            latent_dim: self.architecture.latent_dim,
            num_classes: self.data.num_classes(),
            mode,
            curvature: Curvature::new(self.architecture.curvature)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.split.validate()?;
        self.backbone(Mode::Hyperbolic)?;
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "need at least one seed"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub reference: Dataset,
    pub test: Dataset,
}

/// Generates the synthetic set for `seed` and splits it.
pub fn make_splits(cfg: &ExperimentConfig, seed: u64) -> Result<Splits> {
    cfg.split.validate()?;
    let spec = SyntheticSpec { seed, ..cfg.data.clone() };
    let data = generate_synthetic(&spec)?.dataset;
    let (train, rest) = data.split(cfg.split.train, seed);
    let reference_share = cfg.split.reference / (1.0 - cfg.split.train);
    let (reference, test) = rest.split(reference_share, seed.wrapping_add(1));
    if train.is_empty() || reference.is_empty() || test.is_empty() {
        return Err(Error::Empty("data split"));
    }
    Ok(Splits { train, reference, test })
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub mode: Mode,
    pub seed: u64,
    pub model: MultiExitModel,
    pub history: TrainOutcome,
    pub test: EvalMetrics,
}

pub fn train_run(cfg: &ExperimentConfig, mode: Mode, seed: u64, splits: &Splits) -> Result<TrainedRun> {
    let mut model = MultiExitModel::new(cfg.backbone(mode)?, seed)?;
    let tc = TrainConfig { seed, ..cfg.train.clone() };
    let history = train(&mut model, &splits.train, &tc)?;
    let test = evaluate(&model, &splits.test, &tc.loss, &tc.cone(&model)?)?;
    Ok(TrainedRun {
        mode,
        seed,
        model,
        history,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub hyperbolic: EvalMetrics,
    pub euclidean: EvalMetrics,
}

impl SeedComparison {
    pub fn early_exit_gain(&self) -> f64 {
        self.hyperbolic.exit_accuracy[0] - self.euclidean.exit_accuracy[0]
    }
}

/// Both modes on the same data and split for every seed. Runs are returned for reuse.
pub fn compare_modes(cfg: &ExperimentConfig) -> Result<(Vec<SeedComparison>, Vec<(TrainedRun, Splits)>)> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let splits = make_splits(cfg, seed)?;
        let hyp = train_run(cfg, Mode::Hyperbolic, seed, &splits)?;
        let euc = train_run(cfg, Mode::Euclidean, seed, &splits)?;
        rows.push(SeedComparison {
            seed,
            hyperbolic: hyp.test.clone(),
            euclidean: euc.test.clone(),
        });
        runs.push((hyp, splits.clone()));
        runs.push((euc, splits));
    }
    Ok((rows, runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerStudy {
    pub stats: NormStats,
    pub reports: Vec<TriggerReport>,
}

impl TriggerStudy {
    pub fn report(&self, strategy: &str) -> Option<&TriggerReport> {
        self.reports.iter().find(|r| r.strategy == strategy)
    }
}

/// Calibrates on the reference split and evaluates every strategy on the test split.
pub fn trigger_study(cfg: &ExperimentConfig, model: &MultiExitModel, splits: &Splits) -> Result<TriggerStudy> {
    let stats = calibrate(model, &splits.reference, &cfg.calibration)?;
    let cost = CostModel::from_model(model);
    let mut strategies: Vec<Strategy> = (0..model.num_exits()).map(|exit| Strategy::Fixed { exit }).collect();
    strategies.push(Strategy::GlobalNorm);
    strategies.push(Strategy::ClassNorm);
    if !cfg.entropy_thresholds.is_empty() {
        strategies.push(Strategy::Entropy {
            thresholds: cfg.entropy_thresholds.clone(),
        });
    }
    let reports = strategies
        .iter()
        .map(|s| evaluate_trigger(model, s, Some(&stats), &cfg.trigger, &splits.test, &cost))
        .collect::<Result<Vec<_>>>()?;
    Ok(TriggerStudy { stats, reports })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub seed: u64,
    pub exit_accuracy: Vec<f64>,
    pub mean_norm: Vec<f64>,
    pub entailment_violation: Option<f64>,
}

/// HypEE test metrics for each entailment weight and seed.
pub fn lambda_sweep(cfg: &ExperimentConfig, lambdas: &[f64]) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let splits = make_splits(cfg, seed)?;
        for &lambda in lambdas {
            let mut c = cfg.clone();
            c.train.loss.lambda = lambda;
            let run = train_run(&c, Mode::Hyperbolic, seed, &splits)?;
            rows.push(SweepRow {
                lambda,
                seed,
                exit_accuracy: run.test.exit_accuracy,
                mean_norm: run.test.mean_norm,
                entailment_violation: run.test.entailment_violation,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let exits = rows.first().map_or(0, |r| r.exit_accuracy.len());
    let mut s = String::from("lambda,seed");
    for i in 0..exits {
        let _ = write!(s, ",acc_exit{i}");
    }
    for i in 0..exits {
        let _ = write!(s, ",norm_exit{i}");
    }
    s.push_str(",violation\n");
    for r in rows {
        let _ = write!(s, "{},{}", r.lambda, r.seed);
        for v in r.exit_accuracy.iter().chain(&r.mean_norm) {
            let _ = write!(s, ",{v}");
        }
        let _ = writeln!(s, ",{}", r.entailment_violation.map_or(String::new(), |v| v.to_string()));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub latent_dim: usize,
    pub mode: Mode,
    pub seed: u64,
    pub parameters: usize,
    pub exit_accuracy: Vec<f64>,
    /// Cumulative multiply-accumulates to reach each exit.
    pub macs: Vec<f64>,
}

/// Trains each mode at each latent dimension for every seed.
pub fn latent_ablation(cfg: &ExperimentConfig, dims: &[usize], modes: &[Mode]) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let splits = make_splits(cfg, seed)?;
        for &n in dims {
            let mut c = cfg.clone();
            c.architecture.latent_dim = n;
            for &mode in modes {
                let run = train_run(&c, mode, seed, &splits)?;
                rows.push(AblationRow {
                    latent_dim: n,
                    mode,
                    seed,
                    parameters: run.model.params().len(),
                    exit_accuracy: run.test.exit_accuracy,
                    macs: CostModel::from_model(&run.model).cumulative_macs().to_vec(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let exits = rows.first().map_or(0, |r| r.exit_accuracy.len());
    let mut s = String::from("latent_dim,mode,seed,parameters");
    for i in 0..exits {
        let _ = write!(s, ",acc_exit{i}");
    }
    for i in 0..exits {
        let _ = write!(s, ",macs_exit{i}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},{},{}", r.latent_dim, r.mode.label(), r.seed, r.parameters);
        for v in r.exit_accuracy.iter().chain(&r.macs) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}
