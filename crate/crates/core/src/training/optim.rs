use std::collections::HashMap;

use super::AdamConfig;
use crate::model::Param;

#[derive(Debug, Clone, Default)]
struct Moments {
    m: Vec<f32>,
    v: Vec<f32>,
    step: i32,
}

/// Adam with bias correction. Parameters without a gradient since the last
/// step are skipped entirely, moments included.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    state: HashMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            state: HashMap::new(),
        }
    }

    /// Number of updates applied to `name` so far.
    pub fn steps(&self, name: &str) -> usize {
        self.state.get(name).map_or(0, |m| m.step as usize)
    }

    /// Updates every touched parameter and clears all gradients.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = (String, &'a mut Param)>) {
        let c = &self.config;
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        let (lr, eps) = (c.lr as f32, c.eps as f32);
        for (name, p) in params {
            if !p.touched {
                continue;
            }
            let slot = self.state.entry(name).or_insert_with(|| Moments {
                m: vec![0.0; p.len()],
                v: vec![0.0; p.len()],
                step: 0,
            });
            slot.step += 1;
            let bc1 = 1.0 - b1.powi(slot.step);
            let bc2 = 1.0 - b2.powi(slot.step);
            for i in 0..p.value.len() {
                let g = p.grad[i];
                slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * g;
                slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * g * g;
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                p.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.zero_grad();
        }
    }
}
