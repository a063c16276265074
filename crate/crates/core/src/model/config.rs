use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;

/// Conv-block widths and normalization settings of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Output channels of each block; each block holds two 3×3 convolutions.
    pub widths: Vec<usize>,
    /// One normalization parameter set per dataset instead of a shared one.
    pub dataset_aware_norm: bool,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            widths: vec![64, 128, 256, 512],
            dataset_aware_norm: false,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

impl EncoderConfig {
    pub fn embedding_dim(&self) -> usize {
        *self.widths.last().expect("at least one block")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub features: FeatureConfig,
    pub encoder: EncoderConfig,
    pub head_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            features: FeatureConfig::default(),
            encoder: EncoderConfig::default(),
            head_hidden: 512,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder.widths.is_empty() || self.encoder.widths.contains(&0) {
            return Err(Error::config("encoder.widths", "need at least one non-zero width"));
        }
        let blocks = self.encoder.widths.len() as u32;
        if self.features.patch_frames >> blocks == 0 || self.features.n_mels >> blocks == 0 {
            return Err(Error::config(
                "encoder.widths",
                format!("{blocks} pooling stages collapse a {}×{} patch", self.features.patch_frames, self.features.n_mels),
            ));
        }
        if self.head_hidden == 0 {
            return Err(Error::config("head_hidden", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.encoder.bn_momentum) || self.encoder.bn_eps <= 0.0 {
            return Err(Error::config("encoder.bn_momentum", "momentum in [0,1], eps > 0"));
        }
        Ok(())
    }

    /// Hex SHA-256 over everything that changes tensor shapes or input semantics.
    pub fn digest(&self) -> String {
        let text = format!(
            "features[{}];widths={:?};aware={};momentum={};eps={};hidden={}",
            self.features.digest_string(),
            self.encoder.widths,
            self.encoder.dataset_aware_norm,
            self.encoder.bn_momentum,
            self.encoder.bn_eps,
            self.head_hidden
        );
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Spatial size (time, freq) entering each block, plus the final size.
    pub fn spatial_trace(&self) -> Vec<(usize, usize)> {
        let mut s = (self.features.patch_frames, self.features.n_mels);
        let mut trace = vec![s];
        for _ in &self.encoder.widths {
            s = (s.0 / 2, s.1 / 2);
            trace.push(s);
        }
        trace
    }
}
