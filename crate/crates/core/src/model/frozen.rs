use std::sync::Arc;

use super::{Encoder, Mode, ModelConfig, ModelState};
use crate::error::{Error, Result};
use crate::nn::{Matrix, Tensor4};

/// Immutable, shareable encoder for embedding extraction.
#[derive(Debug, Clone)]
pub struct FrozenEncoder {
    encoder: Arc<Encoder>,
    config: ModelConfig,
}

impl FrozenEncoder {
    pub fn new(state: &ModelState) -> Self {
        FrozenEncoder {
            encoder: Arc::new(state.encoder.clone()),
            config: state.config.clone(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.embedding_dim()
    }

    /// Datasets with their own normalization set (empty in shared mode).
    pub fn norm_datasets(&self) -> &[String] {
        &self.encoder.norm_datasets
    }

    /// Eval-mode embeddings. `norm_dataset` selects the normalization set
    /// and is ignored in shared-normalization mode.
    pub fn embed(&self, batch: &Tensor4<f32>, norm_dataset: &str) -> Result<Matrix<f32>> {
        self.encoder.forward_eval(batch, norm_dataset)
    }

    pub fn forward(&self, batch: &Tensor4<f32>, norm_dataset: &str, mode: Mode) -> Result<Matrix<f32>> {
        match mode {
            Mode::Eval => self.embed(batch, norm_dataset),
            Mode::Train => Err(Error::Frozen("train-mode forward")),
        }
    }
}

/// Freezes the encoder of `state`.
pub fn freeze_encoder(state: &ModelState) -> FrozenEncoder {
    FrozenEncoder::new(state)
}
