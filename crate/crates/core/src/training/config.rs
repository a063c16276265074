use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SplitRatios;
use crate::losses::LossConfig;
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    WithinDataset,
    Transfer,
    CrossDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    Sequential,
    #[default]
    Joint,
}

/// Focal dataset regularization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdrConfig {
    pub beta: f64,
    /// Train macro F1 a dataset must reach to count as converged.
    pub threshold: f64,
    /// Convergence epochs; measured by a calibration run when absent.
    pub n_e: Option<BTreeMap<String, usize>>,
}

impl Default for FdrConfig {
    fn default() -> Self {
        FdrConfig {
            beta: 0.999,
            threshold: 0.9,
            n_e: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub scenario: Scenario,
    /// Training datasets, in declaration order.
    pub datasets: Vec<String>,
    /// Datasets receiving a fresh head on the frozen encoder (transfer scenario).
    pub transfer_targets: Vec<String>,
    pub mixing: Mixing,
    /// FDR is off when absent.
    pub fdr: Option<FdrConfig>,
    /// Per-dataset normalization statistics and affine parameters.
    pub dataset_aware_norm: bool,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    /// Epochs without mean-val-loss improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub classes_per_batch: usize,
    pub per_class: usize,
    pub split: SplitRatios,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scenario: Scenario::WithinDataset,
            datasets: Vec::new(),
            transfer_targets: Vec::new(),
            mixing: Mixing::Joint,
            fdr: None,
            dataset_aware_norm: false,
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
            patience: 10,
            max_epochs: 100,
            seed: 0,
            batch_size: 64,
            classes_per_batch: 16,
            per_class: 4,
            split: SplitRatios::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The model configuration with the run's normalization mode applied.
    pub fn model_config(&self) -> ModelConfig {
        let mut m = self.model.clone();
        m.encoder.dataset_aware_norm |= self.dataset_aware_norm;
        m
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.datasets.len();
        match self.scenario {
            Scenario::WithinDataset if n != 1 => {
                return Err(Error::config("scenario", format!("within_dataset trains on exactly one dataset, {n} given")))
            }
            Scenario::Transfer if n != 1 => {
                return Err(Error::config("scenario", format!("transfer names exactly one base dataset, {n} given")))
            }
            Scenario::CrossDataset if n < 2 => {
                return Err(Error::config("scenario", format!("cross_dataset needs at least two datasets, {n} given")))
            }
            _ => {}
        }
        if self.scenario != Scenario::Transfer && !self.transfer_targets.is_empty() {
            return Err(Error::config("transfer_targets", "only valid in the transfer scenario"));
        }
        let mut seen = self.datasets.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != n {
            return Err(Error::config("datasets", "duplicate dataset id"));
        }
        if let Some(fdr) = &self.fdr {
            if !(fdr.beta > 0.0 && fdr.beta < 1.0) {
                return Err(Error::config("fdr.beta", "must lie in (0, 1)"));
            }
            if !(0.0..=1.0).contains(&fdr.threshold) {
                return Err(Error::config("fdr.threshold", "must lie in [0, 1]"));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.classes_per_batch * self.per_class != self.batch_size {
            return Err(Error::config(
                "classes_per_batch",
                format!(
                    "{} classes × {} items does not fill a batch of {}",
                    self.classes_per_batch, self.per_class, self.batch_size
                ),
            ));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be positive"));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::config("optimizer.lr", "must be positive"));
        }
        self.loss.validate()?;
        self.model_config().validate()
    }
}
