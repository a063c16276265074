use rand::Rng;

use super::Param;
use crate::nn::{self, Matrix};

/// `dim → hidden (ReLU) → classes` classifier for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub classes: Vec<String>,
    pub input_dim: usize,
    pub hidden: usize,
    pub fc1_weight: Param,
    pub fc1_bias: Param,
    pub fc2_weight: Param,
    pub fc2_bias: Param,
}

#[derive(Debug)]
pub struct HeadCache {
    input: Matrix<f32>,
    hidden: Matrix<f32>,
}

impl MlpHead {
    pub fn new<R: Rng + ?Sized>(classes: Vec<String>, input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let c = classes.len();
        MlpHead {
            classes,
            input_dim,
            hidden,
            fc1_weight: Param::kaiming_uniform(hidden * input_dim, input_dim, rng),
            fc1_bias: Param::filled(hidden, 0.0),
            fc2_weight: Param::kaiming_uniform(c * hidden, hidden, rng),
            fc2_bias: Param::filled(c, 0.0),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn param_count(&self) -> usize {
        self.fc1_weight.len() + self.fc1_bias.len() + self.fc2_weight.len() + self.fc2_bias.len()
    }

    /// Rows of the final layer, `classes × hidden`.
    pub fn class_weights(&self) -> Matrix<f32> {
        Matrix::from_vec(self.fc2_weight.value.clone(), self.num_classes(), self.hidden)
    }

    pub fn forward(&self, embeddings: &Matrix<f32>) -> (Matrix<f32>, HeadCache) {
        let mut hidden = nn::linear_forward(embeddings, &self.fc1_weight.value, &self.fc1_bias.value, self.hidden);
        hidden.data.iter_mut().for_each(|v| *v = v.max(0.0));
        let logits = nn::linear_forward(&hidden, &self.fc2_weight.value, &self.fc2_bias.value, self.num_classes());
        (
            logits,
            HeadCache {
                input: embeddings.clone(),
                hidden,
            },
        )
    }

    /// Accumulates gradients; returns the gradient w.r.t. the embeddings.
    pub fn backward(&mut self, cache: HeadCache, d_logits: &Matrix<f32>) -> Matrix<f32> {
        let (dw2, db2, mut d_hidden) = nn::linear_backward(&cache.hidden, &self.fc2_weight.value, d_logits);
        self.fc2_weight.accumulate(&dw2);
        self.fc2_bias.accumulate(&db2);
        for (d, h) in d_hidden.data.iter_mut().zip(&cache.hidden.data) {
            if *h <= 0.0 {
                *d = 0.0;
            }
        }
        let (dw1, db1, d_in) = nn::linear_backward(&cache.input, &self.fc1_weight.value, &d_hidden);
        self.fc1_weight.accumulate(&dw1);
        self.fc1_bias.accumulate(&db1);
        d_in
    }

    /// Trainable tensors with their names relative to the head.
    pub fn params_mut(&mut self) -> [(&'static str, &mut Param); 4] {
        [
            ("fc1.weight", &mut self.fc1_weight),
            ("fc1.bias", &mut self.fc1_bias),
            ("fc2.weight", &mut self.fc2_weight),
            ("fc2.bias", &mut self.fc2_bias),
        ]
    }

    pub fn zero_grad(&mut self) {
        for p in [&mut self.fc1_weight, &mut self.fc1_bias, &mut self.fc2_weight, &mut self.fc2_bias] {
            p.zero_grad();
        }
    }
}

/// One independent head per dataset, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeadBank {
    pub heads: Vec<(String, MlpHead)>,
}

impl HeadBank {
    pub fn get(&self, dataset: &str) -> Option<&MlpHead> {
        self.heads.iter().find(|(d, _)| d == dataset).map(|(_, h)| h)
    }

    pub fn get_mut(&mut self, dataset: &str) -> Option<&mut MlpHead> {
        self.heads.iter_mut().find(|(d, _)| d == dataset).map(|(_, h)| h)
    }

    /// Inserts or replaces the head of `dataset`.
    pub fn insert(&mut self, dataset: &str, head: MlpHead) {
        match self.get_mut(dataset) {
            Some(h) => *h = head,
            None => self.heads.push((dataset.to_string(), head)),
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.heads.iter().map(|(d, _)| d.clone()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.heads.iter().map(|(_, h)| h.param_count()).sum()
    }
}
