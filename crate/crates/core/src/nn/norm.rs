use rayon::prelude::*;

use super::{Real, Tensor4};

/// Per-channel batch statistics (biased variance).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// Elements per channel (N·H·W).
    pub count: usize,
}

impl BatchStats {
    /// Unbiased variance, as used for running estimates.
    pub fn unbiased_var(&self) -> Vec<f64> {
        let m = self.count as f64;
        let scale = if self.count > 1 { m / (m - 1.0) } else { 1.0 };
        self.var.iter().map(|v| v * scale).collect()
    }
}

fn channel_slices<T>(data: &[T], c: usize, hw: usize, ch: usize) -> impl Iterator<Item = &[T]> {
    data.chunks(c * hw).map(move |s| &s[ch * hw..(ch + 1) * hw])
}

/// Normalizes with the statistics of the batch itself.
pub fn batch_norm_train<T: Real>(x: &Tensor4<T>, gamma: &[T], beta: &[T], eps: f64) -> (Tensor4<T>, BatchStats) {
    let [n, c, h, w] = x.shape();
    let hw = h * w;
    let count = n * hw;
    let moments: Vec<(f64, f64)> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut sum = 0.0;
            for s in channel_slices(&x.data, c, hw, ch) {
                sum += s.iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let mean = sum / count as f64;
            let mut sq = 0.0;
            for s in channel_slices(&x.data, c, hw, ch) {
                sq += s.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>();
            }
            (mean, sq / count as f64)
        })
        .collect();
    let mean: Vec<f64> = moments.iter().map(|m| m.0).collect();
    let var: Vec<f64> = moments.iter().map(|m| m.1).collect();
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let y = affine(x, gamma, beta, &mean, &inv_std);
    (
        y,
        BatchStats {
            mean,
            var,
            inv_std,
            count,
        },
    )
}

/// Normalizes with stored running statistics.
pub fn batch_norm_eval<T: Real>(
    x: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    eps: f64,
) -> Tensor4<T> {
    let mean: Vec<f64> = running_mean.iter().map(|v| v.as_f64()).collect();
    let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v.as_f64() + eps).sqrt()).collect();
    affine(x, gamma, beta, &mean, &inv_std)
}

fn affine<T: Real>(x: &Tensor4<T>, gamma: &[T], beta: &[T], mean: &[f64], inv_std: &[f64]) -> Tensor4<T> {
    let [_, c, h, w] = x.shape();
    let hw = h * w;
    let mut y = x.clone();
    y.data.par_chunks_mut(c * hw).for_each(|s| {
        for ch in 0..c {
            let scale = gamma[ch].as_f64() * inv_std[ch];
            let shift = beta[ch].as_f64() - mean[ch] * scale;
            let (scale, shift) = (T::from_f64(scale), T::from_f64(shift));
            for v in &mut s[ch * hw..(ch + 1) * hw] {
                *v = *v * scale + shift;
            }
        }
    });
    y
}

/// Gradients of training-mode batch norm: `(dx, dgamma, dbeta)`.
pub fn batch_norm_backward<T: Real>(
    x: &Tensor4<T>,
    stats: &BatchStats,
    gamma: &[T],
    dy: &Tensor4<T>,
) -> (Tensor4<T>, Vec<T>, Vec<T>) {
    let [_, c, h, w] = x.shape();
    let hw = h * w;
    let m = stats.count as f64;
    let sums: Vec<(f64, f64)> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let (mut dbeta, mut dgamma) = (0.0, 0.0);
            let (mean, inv_std) = (stats.mean[ch], stats.inv_std[ch]);
            for (xs, ds) in channel_slices(&x.data, c, hw, ch).zip(channel_slices(&dy.data, c, hw, ch)) {
                for (xv, dv) in xs.iter().zip(ds) {
                    let d = dv.as_f64();
                    dbeta += d;
                    dgamma += d * (xv.as_f64() - mean) * inv_std;
                }
            }
            (dgamma, dbeta)
        })
        .collect();
    let mut dx = x.clone();
    dx.data
        .par_chunks_mut(c * hw)
        .zip(dy.data.par_chunks(c * hw))
        .for_each(|(xs, ds)| {
            for ch in 0..c {
                let (dgamma, dbeta) = sums[ch];
                let (mean, inv_std) = (stats.mean[ch], stats.inv_std[ch]);
                let k = gamma[ch].as_f64() * inv_std / m;
                for (xv, dv) in xs[ch * hw..(ch + 1) * hw].iter_mut().zip(&ds[ch * hw..(ch + 1) * hw]) {
                    let xhat = (xv.as_f64() - mean) * inv_std;
                    *xv = T::from_f64(k * (m * dv.as_f64() - dbeta - xhat * dgamma));
                }
            }
        });
    let dgamma = sums.iter().map(|s| T::from_f64(s.0)).collect();
    let dbeta = sums.iter().map(|s| T::from_f64(s.1)).collect();
    (dx, dgamma, dbeta)
}
