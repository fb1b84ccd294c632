//! One experiment config file drives every CLI command; flags only select the
//! command and paths, so a run directory always records the exact
//! hyperparameters used.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::biometric::{ComparatorConfig, DEFAULT_TAU};
use crate::error::{Error, Result};
use crate::training::{TrainConfig, TrainMode};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    pub n_identities: usize,
    #[serde(default = "default_variations")]
    pub variations_per_identity: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    pub resolution: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_variations() -> usize {
    2
}

/// Dyadic by default so morph symmetry is exact in floating point.
fn default_alphas() -> Vec<f64> {
    vec![0.5]
}

fn default_train_fraction() -> f64 {
    0.75
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub comparator: ComparatorConfig,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl ExperimentConfig {
    /// Desk-scale preset: 64x64 synthetic data, small network.
    pub fn desk(mode: TrainMode, n_identities: usize) -> Self {
        let train = TrainConfig::desk(mode, 3);
        ExperimentConfig {
            data: DataConfig {
                n_identities,
                variations_per_identity: 2,
                alphas: default_alphas(),
                resolution: train.net.resolution,
                seed: 0,
                train_fraction: default_train_fraction(),
            },
            train,
            comparator: ComparatorConfig::Toy,
            tau: DEFAULT_TAU,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.data.n_identities < 2 {
            return Err(Error::Config(format!(
                "n_identities must be >= 2, got {}",
                self.data.n_identities
            )));
        }
        if self.data.alphas.is_empty() {
            return Err(Error::Config("alphas must be nonempty".into()));
        }
        for &a in &self.data.alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha {a} outside [0,1]")));
            }
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0,1), got {}",
                self.data.train_fraction
            )));
        }
        if self.data.resolution != self.train.net.resolution {
            return Err(Error::Config(format!(
                "data resolution {} != network resolution {}",
                self.data.resolution, self.train.net.resolution
            )));
        }
        if !(-1.0..1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must be in (-1,1), got {}", self.tau)));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("config encode: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
