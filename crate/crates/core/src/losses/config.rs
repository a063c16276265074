use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "ce")]
    Ce,
    #[serde(rename = "ce+contrastive")]
    CeContrastive,
    #[serde(rename = "ce+triplet")]
    CeTriplet,
    #[serde(rename = "ce+circle")]
    CeCircle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Weight λ of the metric term.
    pub lambda: f64,
    pub triplet_margin: f64,
    pub contrastive_pos_margin: f64,
    pub contrastive_neg_margin: f64,
    pub circle_margin: f64,
    pub circle_scale: f64,
    pub regularface_weight: f64,
    /// Keep only hinge-violating pairs/triplets.
    pub hard_mining: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::Ce,
            lambda: 1.0,
            triplet_margin: 0.05,
            contrastive_pos_margin: 1.0,
            contrastive_neg_margin: 0.0,
            circle_margin: 0.25,
            circle_scale: 32.0,
            regularface_weight: 0.1,
            hard_mining: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::config("loss.lambda", "must be >= 0"));
        }
        if !(self.circle_margin > 0.0 && self.circle_margin < 1.0) {
            return Err(Error::config("loss.circle_margin", "must lie in (0, 1)"));
        }
        if !(self.circle_scale > 0.0) {
            return Err(Error::config("loss.circle_scale", "must be > 0"));
        }
        if !(self.regularface_weight >= 0.0) {
            return Err(Error::config("loss.regularface_weight", "must be >= 0"));
        }
        Ok(())
    }
}
