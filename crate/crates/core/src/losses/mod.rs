//! Classification and metric-learning objectives over cosine similarity.
//!
//! Every loss returns its value together with the gradient with respect to
//! its matrix input, computed in `f64`.

mod config;
mod metric;
mod miners;
mod similarity;


pub use config::{LossConfig, LossKind};
pub use metric::{circle_loss, contrastive_loss, regularface, triplet_loss};
pub use miners::{mine_pairs, mine_triplets, PairSet, Triplet};
pub use similarity::{cosine, cosine_matrix, NORM_FLOOR};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// A scalar loss and its gradient with respect to the input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Matrix<f64>,
}

impl LossGrad {
    pub fn zero(rows: usize, cols: usize) -> Self {
        LossGrad {
            value: 0.0,
            grad: Matrix::zeros(rows, cols),
        }
    }
}

/// Mean negative log-softmax of the labelled class.
pub fn cross_entropy(logits: &Matrix<f64>, labels: &[usize]) -> Result<LossGrad> {
    if labels.len() != logits.rows {
        return Err(Error::Shape {
            expected: format!("{} labels", logits.rows),
            actual: format!("{} labels", labels.len()),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.cols) {
        return Err(Error::InvalidInput(format!("label {bad} outside [0, {})", logits.cols)));
    }
    let b = logits.rows as f64;
    let mut out = LossGrad::zero(logits.rows, logits.cols);
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        out.value += (log_z - row[label]) / b;
        let g = out.grad.row_mut(i);
        for (c, v) in row.iter().enumerate() {
            g[c] = (v - log_z).exp() / b;
        }
        g[label] -= 1.0 / b;
    }
    Ok(out)
}

/// The metric-learning term selected by `config.kind` (zero for plain CE).
pub fn metric_loss(config: &LossConfig, embeddings: &Matrix<f64>, labels: &[usize]) -> LossGrad {
    match config.kind {
        LossKind::Ce => LossGrad::zero(embeddings.rows, embeddings.cols),
        LossKind::CeContrastive => contrastive_loss(
            embeddings,
            &mine_pairs(labels),
            config.contrastive_pos_margin,
            config.contrastive_neg_margin,
            config.hard_mining,
        ),
        LossKind::CeTriplet => triplet_loss(
            embeddings,
            &mine_triplets(labels),
            config.triplet_margin,
            config.hard_mining,
        ),
        LossKind::CeCircle => circle_loss(embeddings, labels, config.circle_margin, config.circle_scale),
    }
}

/// `ce + λ·metric + reg_weight·reg`, refusing non-finite components.
pub fn joint_loss(ce: f64, metric: f64, reg: f64, lambda: f64, reg_weight: f64) -> Result<f64> {
    for (component, value) in [("ce", ce), ("metric", metric), ("regularizer", reg)] {
        if !value.is_finite() {
            return Err(Error::NonFinite { component, value });
        }
    }
    Ok(ce + lambda * metric + reg_weight * reg)
}
