//! JSON checkpoint: backbone config, seed and the flat parameter vector.
//!
//! Floats are written with shortest round-trip formatting, so a loaded model
//! reproduces the saved model's outputs bitwise.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{FormatError, Result};
use crate::trainer::{BackboneConfig, MultiExitModel};

pub const CHECKPOINT_FORMAT: &str = "hypee-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: BackboneConfig,
    /// Initialisation seed of the saved model.
    pub seed: u64,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: &MultiExitModel, seed: u64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config().clone(),
            seed,
            params: model.params().to_vec(),
        }
    }

    pub fn into_model(self) -> Result<MultiExitModel> {
        MultiExitModel::from_params(self.config, self.params)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            format: Option<String>,
            version: Option<u32>,
        }
        let probe: Probe = serde_json::from_str(text)?;
        if probe.format.as_deref() != Some(CHECKPOINT_FORMAT) {
            return Err(FormatError::InvalidHeader {
                field: "format",
                reason: format!("expected \"{CHECKPOINT_FORMAT}\", found {:?}", probe.format),
            }
            .into());
        }
        match probe.version {
            Some(CHECKPOINT_VERSION) => {}
            found => {
                return Err(FormatError::UnsupportedVersion {
                    found: found.unwrap_or(0),
                    supported: CHECKPOINT_VERSION,
                }
                .into())
            }
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, ckpt.to_json()?.as_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)
}
