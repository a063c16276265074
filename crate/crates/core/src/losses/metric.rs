use super::similarity::{cosine_matrix, similarity_backward};
use super::{LossGrad, PairSet, Triplet};
use crate::nn::Matrix;

fn finish(x: &Matrix<f64>, value: f64, d_sim: &Matrix<f64>) -> LossGrad {
    LossGrad {
        value,
        grad: similarity_backward(x, d_sim),
    }
}

/// Mean hinge over the pairs (or over the violating ones when `hard`).
fn hinge_mean(
    pairs: &[(usize, usize)],
    hinge: impl Fn(f64) -> f64,
    sign: f64,
    s: &Matrix<f64>,
    d_sim: &mut Matrix<f64>,
    hard: bool,
) -> f64 {
    let n = s.rows;
    let active: Vec<(usize, usize, f64)> = pairs
        .iter()
        .map(|&(i, j)| (i, j, hinge(s.data[i * n + j])))
        .filter(|&(_, _, h)| !hard || h > 0.0)
        .collect();
    if active.is_empty() {
        return 0.0;
    }
    let k = active.len() as f64;
    let mut total = 0.0;
    for (i, j, h) in active {
        total += h;
        if h > 0.0 {
            d_sim.data[i * n + j] += sign / k;
        }
    }
    total / k
}

/// `mean(max(0, pos_margin − s))` over positives plus `mean(max(0, s − neg_margin))` over negatives.
pub fn contrastive_loss(x: &Matrix<f64>, pairs: &PairSet, pos_margin: f64, neg_margin: f64, hard: bool) -> LossGrad {
    let s = cosine_matrix(x);
    let mut d_sim = Matrix::zeros(x.rows, x.rows);
    let pos = hinge_mean(&pairs.positive, |v| (pos_margin - v).max(0.0), -1.0, &s, &mut d_sim, hard);
    let neg = hinge_mean(&pairs.negative, |v| (v - neg_margin).max(0.0), 1.0, &s, &mut d_sim, hard);
    finish(x, pos + neg, &d_sim)
}

/// `mean(max(0, s(a,n) − s(a,p) + margin))` over the triplets.
pub fn triplet_loss(x: &Matrix<f64>, triplets: &[Triplet], margin: f64, hard: bool) -> LossGrad {
    let s = cosine_matrix(x);
    let n = x.rows;
    let mut d_sim = Matrix::zeros(n, n);
    let hinges: Vec<(Triplet, f64)> = triplets
        .iter()
        .map(|t| {
            let h = s.data[t.anchor * n + t.negative] - s.data[t.anchor * n + t.positive] + margin;
            (*t, h.max(0.0))
        })
        .filter(|&(_, h)| !hard || h > 0.0)
        .collect();
    if hinges.is_empty() {
        return LossGrad::zero(x.rows, x.cols);
    }
    let k = hinges.len() as f64;
    let mut total = 0.0;
    for (t, h) in hinges {
        total += h;
        if h > 0.0 {
            d_sim.data[t.anchor * n + t.negative] += 1.0 / k;
            d_sim.data[t.anchor * n + t.positive] -= 1.0 / k;
        }
    }
    finish(x, total / k, &d_sim)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|a| (a - max).exp()).sum::<f64>().ln()
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Circle loss with self-paced weights; every anchor with at least one
/// positive and one negative contributes, and the result is their mean.
pub fn circle_loss<L: PartialEq>(x: &Matrix<f64>, labels: &[L], margin: f64, gamma: f64) -> LossGrad {
    let n = x.rows;
    let s = cosine_matrix(x);
    let mut d_sim = Matrix::zeros(n, n);
    let (delta_p, delta_n) = (1.0 - margin, margin);
    let mut anchors: Vec<(usize, Vec<(usize, f64, f64)>, Vec<(usize, f64, f64)>)> = Vec::new();
    for i in 0..n {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for j in (0..n).filter(|&j| j != i) {
            let sij = s.data[i * n + j];
            if labels[i] == labels[j] {
                let alpha = (1.0 + margin - sij).max(0.0);
                let d_alpha = if alpha > 0.0 { -1.0 } else { 0.0 };
                let logit = -gamma * alpha * (sij - delta_p);
                let d_logit = -gamma * (d_alpha * (sij - delta_p) + alpha);
                pos.push((j, logit, d_logit));
            } else {
                let alpha = (sij + margin).max(0.0);
                let d_alpha = if alpha > 0.0 { 1.0 } else { 0.0 };
                let logit = gamma * alpha * (sij - delta_n);
                let d_logit = gamma * (d_alpha * (sij - delta_n) + alpha);
                neg.push((j, logit, d_logit));
            }
        }
        if !pos.is_empty() && !neg.is_empty() {
            anchors.push((i, pos, neg));
        }
    }
    if anchors.is_empty() {
        return LossGrad::zero(x.rows, x.cols);
    }
    let k = anchors.len() as f64;
    let mut total = 0.0;
    for (i, pos, neg) in anchors {
        let lp: Vec<f64> = pos.iter().map(|p| p.1).collect();
        let ln: Vec<f64> = neg.iter().map(|p| p.1).collect();
        let (lse_p, lse_n) = (log_sum_exp(&lp), log_sum_exp(&ln));
        let z = lse_p + lse_n;
        total += softplus(z);
        let outer = sigmoid(z) / k;
        for (terms, lse) in [(&pos, lse_p), (&neg, lse_n)] {
            for &(j, logit, d_logit) in terms.iter() {
                d_sim.data[i * n + j] += outer * (logit - lse).exp() * d_logit;
            }
        }
    }
    finish(x, total / k, &d_sim)
}

/// `(1/C) Σ_i max_{j≠i} cos(w_i, w_j)` over the rows of a classifier weight
/// matrix; ties in the max go to the lowest `j`.
pub fn regularface(weights: &Matrix<f64>) -> LossGrad {
    let c = weights.rows;
    if c < 2 {
        log::warn!("regularface needs at least two classes, got {c}; contributing 0");
        return LossGrad::zero(weights.rows, weights.cols);
    }
    let s = cosine_matrix(weights);
    let mut d_sim = Matrix::zeros(c, c);
    let mut total = 0.0;
    for i in 0..c {
        let mut best = None::<(usize, f64)>;
        for j in (0..c).filter(|&j| j != i) {
            let v = s.data[i * c + j];
            if best.map_or(true, |(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        let (j, v) = best.expect("c >= 2");
        total += v;
        d_sim.data[i * c + j] += 1.0 / c as f64;
    }
    finish(weights, total / c as f64, &d_sim)
}
