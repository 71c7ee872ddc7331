//! Run configuration, its resolved form and its hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hypee::data::{CsvSchema, SyntheticSpec};
use hypee::experiment::{ArchitectureConfig, ExperimentConfig, SplitConfig};
use hypee::trainer::{Mode, TrainConfig};
use hypee::trigger::{CalibrationConfig, TriggerConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Labeled feature CSV; the synthetic generator is used when absent.
    pub csv: Option<PathBuf>,
    pub schema: CsvSchema,
    pub synthetic: SyntheticSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            csv: None,
            schema: CsvSchema::default(),
            synthetic: SyntheticSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub latent_dims: Vec<usize>,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            latent_dims: vec![8, 16, 32, 64, 128],
            modes: vec![Mode::Hyperbolic, Mode::Euclidean],
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    /// Drives the data split, initialisation and training order.
    pub seed: u64,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub architecture: ArchitectureConfig,
    pub train: TrainConfig,
    pub calibration: CalibrationConfig,
    pub trigger: TriggerConfig,
    /// Per-gate entropy thresholds for the entropy strategy, one per early exit.
    pub entropy_thresholds: Vec<f64>,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Hyperbolic,
            seed: 0,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            architecture: ArchitectureConfig::default(),
            train: TrainConfig::default(),
            calibration: CalibrationConfig::default(),
            trigger: TriggerConfig::default(),
            entropy_thresholds: Vec::new(),
            ablation: AblationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        cfg.experiment(&[cfg.seed]).validate()?;
        Ok(cfg)
    }

    pub fn experiment(&self, seeds: &[u64]) -> ExperimentConfig {
        ExperimentConfig {
            data: self.data.synthetic.clone(),
            architecture: self.architecture.clone(),
            train: self.train.clone(),
            calibration: self.calibration.clone(),
            trigger: self.trigger.clone(),
            split: self.split.clone(),
            seeds: seeds.to_vec(),
            entropy_thresholds: self.entropy_thresholds.clone(),
        }
    }

    /// Every field written out, defaults included.
    pub fn resolved_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serialises to TOML")
    }

    /// SHA-256 of the resolved TOML, lowercase hex.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.resolved_toml().as_bytes()))
    }

    /// Metrics label: the mode, marked when the hyperbolic entailment term is off.
    pub fn run_label(&self) -> String {
        match self.mode {
            Mode::Hyperbolic if self.train.loss.lambda == 0.0 => format!("{} (lambda=0, no entailment)", self.mode.label()),
            mode => mode.label().to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_config_round_trips_with_stable_hash() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.resolved_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("mode = \"hyperbolic\"\nlearning_rate = 1.0\n").is_err());
        assert!(toml::from_str::<RunConfig>("[train]\nepoch = 3\n").is_err());
        let ok: RunConfig = toml::from_str("[train]\nepochs = 3\n").unwrap();
        assert_eq!(ok.train.epochs, 3);
    }

    #[test]
    fn labels_follow_mode_and_lambda() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.run_label(), "HypEE");
        cfg.train.loss.lambda = 0.0;
        assert!(cfg.run_label().contains("no entailment"));
        cfg.mode = Mode::Euclidean;
        assert_eq!(cfg.run_label(), "EucEE");
    }
}
