use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RunRecord;
use crate::error::{Error, Result};

/// Raw and normalized focal dataset weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrWeights {
    pub beta: f64,
    pub n_e: BTreeMap<String, usize>,
    pub raw: BTreeMap<String, f64>,
    /// Normalized so the weights sum to the number of datasets.
    pub alpha: BTreeMap<String, f64>,
}

/// First epoch at which each dataset's train macro F1 reaches `threshold`,
/// or the run length when it never does.
pub fn record_convergence(run: &RunRecord, threshold: f64) -> Result<BTreeMap<String, usize>> {
    if run.is_empty() {
        return Err(Error::InvalidInput("empty run record".into()));
    }
    let total = run.epochs.last().map_or(0, |e| e.epoch);
    let mut out = BTreeMap::new();
    for e in &run.epochs {
        for (id, d) in &e.datasets {
            let n = out.entry(id.clone()).or_insert(None);
            if n.is_none() && d.train_macro_f1 >= threshold {
                *n = Some(e.epoch);
            }
        }
    }
    Ok(out.into_iter().map(|(id, n)| (id, n.unwrap_or(total))).collect())
}

/// `(1 − β^n) / (1 − β)`.
pub fn raw_weight(n_e: usize, beta: f64) -> f64 {
    (1.0 - beta.powi(n_e as i32)) / (1.0 - beta)
}

pub fn fdr_weights(n_e: &BTreeMap<String, usize>, beta: f64) -> Result<FdrWeights> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::config("fdr.beta", format!("{beta} is outside (0, 1)")));
    }
    if n_e.is_empty() {
        return Err(Error::InvalidInput("no datasets to weight".into()));
    }
    if let Some((id, _)) = n_e.iter().find(|(_, &n)| n == 0) {
        return Err(Error::InvalidInput(format!("n_e of `{id}` must be at least 1")));
    }
    let raw: BTreeMap<String, f64> = n_e.iter().map(|(d, &n)| (d.clone(), raw_weight(n, beta))).collect();
    let sum: f64 = raw.values().sum();
    let d = raw.len() as f64;
    let alpha = raw.iter().map(|(k, v)| (k.clone(), d * v / sum)).collect();
    Ok(FdrWeights {
        beta,
        n_e: n_e.clone(),
        raw,
        alpha,
    })
}
