//! Four-block convolutional encoder with global max pooling.
//!
//! Block: conv3×3 → norm → ReLU → conv3×3 → norm → ReLU → 2×2 max pool.
//! Normalization sites hold either one shared parameter set or one set per
//! registered dataset; convolution weights are always shared.

use rand::Rng;
use rayon::prelude::*;

use super::{EncoderConfig, Mode, Param};
use crate::error::{Error, Result};
use crate::nn::{self, BatchStats, Matrix, Tensor4};

/// Affine parameters and running statistics of one normalization site.
#[derive(Debug, Clone, PartialEq)]
pub struct NormSet {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

impl NormSet {
    fn new(channels: usize) -> Self {
        NormSet {
            gamma: Param::filled(channels, 1.0),
            beta: Param::filled(channels, 0.0),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    fn update_running(&mut self, stats: &BatchStats, momentum: f64) {
        let var = stats.unbiased_var();
        for c in 0..self.running_mean.len() {
            let rm = self.running_mean[c] as f64;
            let rv = self.running_var[c] as f64;
            self.running_mean[c] = ((1.0 - momentum) * rm + momentum * stats.mean[c]) as f32;
            self.running_var[c] = ((1.0 - momentum) * rv + momentum * var[c]) as f32;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub c_in: usize,
    pub c_out: usize,
    pub convs: [Param; 2],
    /// `norms[site][set]`
    pub norms: [Vec<NormSet>; 2],
}

#[derive(Debug)]
struct BlockCache {
    input: Tensor4<f32>,
    c1: Tensor4<f32>,
    s1: BatchStats,
    a1: Tensor4<f32>,
    c2: Tensor4<f32>,
    s2: BatchStats,
    pre_pool_shape: [usize; 4],
    pool_argmax: Vec<u32>,
}

/// Activations retained by a training-mode forward pass.
#[derive(Debug)]
pub struct EncoderCache {
    blocks: Vec<BlockCache>,
    final_shape: [usize; 4],
    global_argmax: Vec<u32>,
    set: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub blocks: Vec<ConvBlock>,
    /// Dataset ids owning a normalization set, in set order (dataset-aware mode).
    pub norm_datasets: Vec<String>,
    pub input_shape: (usize, usize),
}

fn relu_inplace(t: &mut Tensor4<f32>) {
    t.data.par_iter_mut().for_each(|v| *v = v.max(0.0));
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(config: &EncoderConfig, input_shape: (usize, usize), datasets: &[String], rng: &mut R) -> Self {
        let n_sets = if config.dataset_aware_norm { datasets.len() } else { 1 };
        let mut c_in = 1;
        let blocks = config
            .widths
            .iter()
            .map(|&c_out| {
                let block = ConvBlock {
                    c_in,
                    c_out,
                    convs: [
                        Param::kaiming_uniform(c_out * c_in * 9, c_in * 9, rng),
                        Param::kaiming_uniform(c_out * c_out * 9, c_out * 9, rng),
                    ],
                    norms: [
                        (0..n_sets).map(|_| NormSet::new(c_out)).collect(),
                        (0..n_sets).map(|_| NormSet::new(c_out)).collect(),
                    ],
                };
                c_in = c_out;
                block
            })
            .collect();
        Encoder {
            config: config.clone(),
            blocks,
            norm_datasets: if config.dataset_aware_norm { datasets.to_vec() } else { Vec::new() },
            input_shape,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim()
    }

    /// Adds a fresh normalization set for `dataset` (dataset-aware mode only).
    pub fn register_dataset(&mut self, dataset: &str) {
        if !self.config.dataset_aware_norm || self.norm_datasets.iter().any(|d| d == dataset) {
            return;
        }
        self.norm_datasets.push(dataset.to_string());
        for b in &mut self.blocks {
            for site in &mut b.norms {
                site.push(NormSet::new(b.c_out));
            }
        }
    }

    /// Index of the normalization set used for `dataset`.
    pub fn norm_set(&self, dataset: &str) -> Result<usize> {
        if !self.config.dataset_aware_norm {
            return Ok(0);
        }
        self.norm_datasets
            .iter()
            .position(|d| d == dataset)
            .ok_or_else(|| Error::UnknownDataset(dataset.to_string()))
    }

    pub fn num_norm_sets(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.norms[0].len())
    }

    fn check_input(&self, x: &Tensor4<f32>) -> Result<()> {
        let (h, w) = self.input_shape;
        if x.n == 0 || x.c != 1 || x.h != h || x.w != w {
            return Err(Error::Shape {
                expected: format!("(B≥1, 1, {h}, {w})"),
                actual: format!("{:?}", x.shape()),
            });
        }
        Ok(())
    }

    /// Inference with running statistics. Pure.
    pub fn forward_eval(&self, x: &Tensor4<f32>, dataset: &str) -> Result<Matrix<f32>> {
        self.check_input(x)?;
        let set = self.norm_set(dataset)?;
        let eps = self.config.bn_eps;
        let mut h = x.clone();
        for b in &self.blocks {
            for k in 0..2 {
                let ns = &b.norms[k][set];
                let c = nn::conv3x3_forward(&h, &b.convs[k].value, b.c_out);
                h = nn::batch_norm_eval(&c, &ns.gamma.value, &ns.beta.value, &ns.running_mean, &ns.running_var, eps);
                relu_inplace(&mut h);
            }
            h = nn::max_pool2x2(&h).0;
        }
        let (pooled, _) = nn::global_max_pool(&h);
        Ok(Matrix::from_vec(pooled, x.n, self.embedding_dim()))
    }

    /// Training-mode pass: batch statistics normalize the batch and update
    /// the selected set's running estimates.
    pub fn forward_train(&mut self, x: &Tensor4<f32>, dataset: &str) -> Result<(Matrix<f32>, EncoderCache)> {
        self.check_input(x)?;
        let set = self.norm_set(dataset)?;
        let (eps, momentum) = (self.config.bn_eps, self.config.bn_momentum);
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for b in &mut self.blocks {
            let input = h;
            let c1 = nn::conv3x3_forward(&input, &b.convs[0].value, b.c_out);
            let ns = &mut b.norms[0][set];
            let (mut a1, s1) = nn::batch_norm_train(&c1, &ns.gamma.value, &ns.beta.value, eps);
            ns.update_running(&s1, momentum);
            relu_inplace(&mut a1);
            let c2 = nn::conv3x3_forward(&a1, &b.convs[1].value, b.c_out);
            let ns = &mut b.norms[1][set];
            let (mut a2, s2) = nn::batch_norm_train(&c2, &ns.gamma.value, &ns.beta.value, eps);
            ns.update_running(&s2, momentum);
            relu_inplace(&mut a2);
            let pre_pool_shape = a2.shape();
            let (pooled, pool_argmax) = nn::max_pool2x2(&a2);
            drop(a2);
            caches.push(BlockCache {
                input,
                c1,
                s1,
                a1,
                c2,
                s2,
                pre_pool_shape,
                pool_argmax,
            });
            h = pooled;
        }
        let final_shape = h.shape();
        let (pooled, global_argmax) = nn::global_max_pool(&h);
        Ok((
            Matrix::from_vec(pooled, x.n, self.embedding_dim()),
            EncoderCache {
                blocks: caches,
                final_shape,
                global_argmax,
                set,
            },
        ))
    }

    /// Accumulates parameter gradients for `d_embedding` (B × dim).
    pub fn backward(&mut self, cache: EncoderCache, d_embedding: &Matrix<f32>) {
        let set = cache.set;
        let mut d = nn::global_max_pool_backward(cache.final_shape, &cache.global_argmax, &d_embedding.data);
        for (bi, bc) in cache.blocks.into_iter().enumerate().rev() {
            let b = &mut self.blocks[bi];
            let mut d_a2 = nn::max_pool2x2_backward(bc.pre_pool_shape, &bc.pool_argmax, &d);
            // ReLU mask from the recomputed normalized output of conv2
            {
                let ns = &b.norms[1][set];
                let hw = bc.c2.h * bc.c2.w;
                let c = bc.c2.c;
                d_a2.data
                    .par_chunks_mut(c * hw)
                    .zip(bc.c2.data.par_chunks(c * hw))
                    .for_each(|(ds, xs)| {
                        for ch in 0..c {
                            let scale = ns.gamma.value[ch] as f64 * bc.s2.inv_std[ch];
                            let shift = ns.beta.value[ch] as f64 - bc.s2.mean[ch] * scale;
                            for (dv, xv) in ds[ch * hw..(ch + 1) * hw].iter_mut().zip(&xs[ch * hw..(ch + 1) * hw]) {
                                if *xv as f64 * scale + shift <= 0.0 {
                                    *dv = 0.0;
                                }
                            }
                        }
                    });
            }
            let (d_c2, dg2, db2) = nn::batch_norm_backward(&bc.c2, &bc.s2, &b.norms[1][set].gamma.value, &d_a2);
            drop(d_a2);
            b.norms[1][set].gamma.accumulate(&dg2);
            b.norms[1][set].beta.accumulate(&db2);
            let (dw2, d_a1) = nn::conv3x3_backward(&bc.a1, &b.convs[1].value, &d_c2, true);
            drop(d_c2);
            b.convs[1].accumulate(&dw2);
            let mut d_a1 = d_a1.expect("input gradient requested");
            d_a1.data
                .par_iter_mut()
                .zip(bc.a1.data.par_iter())
                .for_each(|(dv, a)| {
                    if *a <= 0.0 {
                        *dv = 0.0;
                    }
                });
            let (d_c1, dg1, db1) = nn::batch_norm_backward(&bc.c1, &bc.s1, &b.norms[0][set].gamma.value, &d_a1);
            drop(d_a1);
            b.norms[0][set].gamma.accumulate(&dg1);
            b.norms[0][set].beta.accumulate(&db1);
            let (dw1, d_in) = nn::conv3x3_backward(&bc.input, &b.convs[0].value, &d_c1, bi > 0);
            b.convs[0].accumulate(&dw1);
            if let Some(d_in) = d_in {
                d = d_in;
            }
        }
    }

    pub fn conv_param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.convs[0].len() + b.convs[1].len()).sum()
    }

    /// Affine parameters of a single normalization set across all sites.
    pub fn norm_param_count_per_set(&self) -> usize {
        self.blocks.iter().map(|b| 2 * 2 * b.c_out).sum()
    }

    pub fn param_count(&self) -> usize {
        self.conv_param_count() + self.num_norm_sets() * self.norm_param_count_per_set()
    }

    pub fn forward(&mut self, x: &Tensor4<f32>, dataset: &str, mode: Mode) -> Result<Matrix<f32>> {
        match mode {
            Mode::Eval => self.forward_eval(x, dataset),
            Mode::Train => self.forward_train(x, dataset).map(|(e, _)| e),
        }
    }

    pub fn zero_grad(&mut self) {
        for b in &mut self.blocks {
            for p in &mut b.convs {
                p.zero_grad();
            }
            for site in &mut b.norms {
                for ns in site {
                    ns.gamma.zero_grad();
                    ns.beta.zero_grad();
                }
            }
        }
    }
}
