use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Encoder, HeadBank, MlpHead, ModelConfig, Param};
use crate::error::{Error, Result};
use crate::features::MelPatch;
use crate::nn::{Matrix, Tensor4};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamScope {
    Encoder,
    Heads,
    All,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Epoch (1-based) the weights were taken from; 0 before training.
    pub epoch: usize,
    pub val_losses: BTreeMap<String, f64>,
    pub mean_val_loss: Option<f64>,
    /// Mean validation loss of every completed epoch.
    pub history: Vec<f64>,
}

/// Encoder, normalization bank, heads and training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub heads: HeadBank,
    pub meta: TrainingMeta,
}

/// A tensor as stored in checkpoints.
pub struct NamedTensor<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a [f32],
}

pub fn norm_key(aware: bool, dataset: &str) -> String {
    if aware {
        format!("ds:{dataset}")
    } else {
        "shared".to_string()
    }
}

/// Stacks patches into a `B × 1 × frames × bins` tensor.
pub fn patches_to_tensor(patches: &[MelPatch]) -> Tensor4<f32> {
    let (frames, bins) = patches.first().map_or((0, 0), |p| (p.frames, p.bins));
    let mut data = Vec::with_capacity(patches.len() * frames * bins);
    for p in patches {
        assert_eq!((p.frames, p.bins), (frames, bins), "mixed patch shapes");
        data.extend_from_slice(&p.values);
    }
    Tensor4::from_vec(data, patches.len(), 1, frames, bins)
}

impl ModelState {
    /// Fresh model with one head per `(dataset_id, classes)` entry.
    pub fn new(config: ModelConfig, datasets: &[(String, Vec<String>)], seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng_for(seed, &[seed::hash_str("model-init")]);
        let ids: Vec<String> = datasets.iter().map(|(d, _)| d.clone()).collect();
        let input = (config.features.patch_frames, config.features.n_mels);
        let encoder = Encoder::new(&config.encoder, input, &ids, &mut rng);
        let mut heads = HeadBank::default();
        for (id, classes) in datasets {
            if heads.get(id).is_some() {
                return Err(Error::InvalidInput(format!("dataset `{id}` listed twice")));
            }
            heads.insert(id, MlpHead::new(classes.clone(), config.encoder.embedding_dim(), config.head_hidden, &mut rng));
        }
        Ok(ModelState {
            config,
            encoder,
            heads,
            meta: TrainingMeta::default(),
        })
    }

    /// Datasets with a head, in registration order.
    pub fn dataset_ids(&self) -> Vec<String> {
        self.heads.ids()
    }

    pub fn embedding_dim(&self) -> usize {
        self.encoder.embedding_dim()
    }

    /// Registers a new head (and, in dataset-aware mode, a normalization set).
    pub fn add_dataset(&mut self, dataset: &str, classes: Vec<String>, seed: u64) {
        let mut rng = seed::rng_for(seed, &[seed::hash_str("head-init"), seed::hash_str(dataset)]);
        let head = MlpHead::new(classes, self.embedding_dim(), self.config.head_hidden, &mut rng);
        self.heads.insert(dataset, head);
        self.encoder.register_dataset(dataset);
    }

    /// `B × 1 × frames × bins` → `B × dim`.
    pub fn encoder_forward(&mut self, batch: &Tensor4<f32>, dataset: &str, mode: Mode) -> Result<Matrix<f32>> {
        self.encoder.forward(batch, dataset, mode)
    }

    /// Raw logits of the dataset's head.
    pub fn head_forward(&self, embeddings: &Matrix<f32>, dataset: &str) -> Result<Matrix<f32>> {
        let head = self.heads.get(dataset).ok_or_else(|| Error::UnknownDataset(dataset.to_string()))?;
        if embeddings.cols != head.input_dim {
            return Err(Error::Shape {
                expected: format!("B × {}", head.input_dim),
                actual: format!("{} × {}", embeddings.rows, embeddings.cols),
            });
        }
        Ok(head.forward(embeddings).0)
    }

    pub fn param_count(&self, scope: ParamScope) -> usize {
        match scope {
            ParamScope::Encoder => self.encoder.param_count(),
            ParamScope::Heads => self.heads.param_count(),
            ParamScope::All => self.encoder.param_count() + self.heads.param_count(),
        }
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        for (_, h) in &mut self.heads.heads {
            h.zero_grad();
        }
    }

    /// Every trainable parameter with its checkpoint name.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let aware = self.config.encoder.dataset_aware_norm;
        let mut out = Vec::new();
        let norm_names: Vec<String> = if aware {
            self.encoder.norm_datasets.clone()
        } else {
            vec![String::new()]
        };
        for (bi, b) in self.encoder.blocks.iter_mut().enumerate() {
            let [c1, c2] = &mut b.convs;
            out.push((format!("enc.block{}.conv1.weight", bi + 1), c1));
            out.push((format!("enc.block{}.conv2.weight", bi + 1), c2));
            for (si, site) in b.norms.iter_mut().enumerate() {
                for (set, ns) in site.iter_mut().enumerate() {
                    let prefix = format!("norm.block{}.site{}.{}", bi + 1, si + 1, norm_key(aware, &norm_names[set]));
                    out.push((format!("{prefix}.weight"), &mut ns.gamma));
                    out.push((format!("{prefix}.bias"), &mut ns.beta));
                }
            }
        }
        for (id, h) in &mut self.heads.heads {
            let MlpHead {
                fc1_weight,
                fc1_bias,
                fc2_weight,
                fc2_bias,
                ..
            } = h;
            out.push((format!("head.ds:{id}.fc1.weight"), fc1_weight));
            out.push((format!("head.ds:{id}.fc1.bias"), fc1_bias));
            out.push((format!("head.ds:{id}.fc2.weight"), fc2_weight));
            out.push((format!("head.ds:{id}.fc2.bias"), fc2_bias));
        }
        out
    }

    /// Every stored array (parameters and running statistics), in a fixed order.
    pub fn tensors(&self) -> Vec<NamedTensor<'_>> {
        let aware = self.config.encoder.dataset_aware_norm;
        let mut out = Vec::new();
        for (bi, b) in self.encoder.blocks.iter().enumerate() {
            for (ci, conv) in b.convs.iter().enumerate() {
                let c_in = if ci == 0 { b.c_in } else { b.c_out };
                out.push(NamedTensor {
                    name: format!("enc.block{}.conv{}.weight", bi + 1, ci + 1),
                    dims: vec![b.c_out, c_in, 3, 3],
                    data: &conv.value,
                });
            }
            for (si, site) in b.norms.iter().enumerate() {
                for (set, ns) in site.iter().enumerate() {
                    let owner = if aware { self.encoder.norm_datasets[set].as_str() } else { "" };
                    let prefix = format!("norm.block{}.site{}.{}", bi + 1, si + 1, norm_key(aware, owner));
                    for (suffix, data) in [
                        ("weight", &ns.gamma.value),
                        ("bias", &ns.beta.value),
                        ("running_mean", &ns.running_mean),
                        ("running_var", &ns.running_var),
                    ] {
                        out.push(NamedTensor {
                            name: format!("{prefix}.{suffix}"),
                            dims: vec![b.c_out],
                            data,
                        });
                    }
                }
            }
        }
        for (id, h) in &self.heads.heads {
            let c = h.num_classes();
            for (suffix, dims, data) in [
                ("fc1.weight", vec![h.hidden, h.input_dim], &h.fc1_weight.value),
                ("fc1.bias", vec![h.hidden], &h.fc1_bias.value),
                ("fc2.weight", vec![c, h.hidden], &h.fc2_weight.value),
                ("fc2.bias", vec![c], &h.fc2_bias.value),
            ] {
                out.push(NamedTensor {
                    name: format!("head.ds:{id}.{suffix}"),
                    dims,
                    data,
                });
            }
        }
        out
    }

    /// Mutable views of the arrays listed by [`tensors`](Self::tensors), same order.
    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out = Vec::new();
        for b in &mut self.encoder.blocks {
            for conv in &mut b.convs {
                out.push(&mut conv.value);
            }
            for site in &mut b.norms {
                for ns in site {
                    let NormSetFields { g, b, m, v } = split_norm(ns);
                    out.extend([g, b, m, v]);
                }
            }
        }
        for (_, h) in &mut self.heads.heads {
            out.push(&mut h.fc1_weight.value);
            out.push(&mut h.fc1_bias.value);
            out.push(&mut h.fc2_weight.value);
            out.push(&mut h.fc2_bias.value);
        }
        out
    }
}

struct NormSetFields<'a> {
    g: &'a mut Vec<f32>,
    b: &'a mut Vec<f32>,
    m: &'a mut Vec<f32>,
    v: &'a mut Vec<f32>,
}

fn split_norm(ns: &mut super::NormSet) -> NormSetFields<'_> {
    NormSetFields {
        g: &mut ns.gamma.value,
        b: &mut ns.beta.value,
        m: &mut ns.running_mean,
        v: &mut ns.running_var,
    }
}
