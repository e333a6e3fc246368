use serde::{Deserialize, Serialize};

use crate::params::{Gradients, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: applied as `p -= lr · weight_decay · p`.
    pub weight_decay: f64,
    /// The learning rate is multiplied by `lr_decay` every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
            lr_decay: 0.5,
            lr_decay_every: 4000,
        }
    }
}

impl AdamConfig {
    pub fn lr_at(&self, epoch: u64) -> f64 {
        if self.lr_decay_every == 0 {
            return self.lr;
        }
        let k = (epoch / self.lr_decay_every) as i32;
        self.lr * self.lr_decay.powi(k)
    }
}

/// Optimizer moments; serializable so training can resume exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols())).collect();
        Self {
            config,
            state: AdamState {
                step: 0,
                first: zeros(),
                second: zeros(),
            },
        }
    }

    pub fn from_state(config: AdamConfig, state: AdamState) -> Self {
        Self { config, state }
    }

    pub fn state(&self) -> &AdamState {
        &self.state
    }

    pub fn steps(&self) -> u64 {
        self.state.step
    }

    /// One update at the learning rate scheduled for `epoch`. Parameters
    /// without a gradient slot are treated as having a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, epoch: u64) {
        let c = self.config;
        let lr = c.lr_at(epoch);
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let m = &mut self.state.first[i];
            let v = &mut self.state.second[i];
            let p = store.get_mut(id);
            let g = grads.get(id);
            for k in 0..p.len() {
                let gk = g.map_or(0.0, |g| g.data()[k]);
                let mk = c.beta1 * m.data()[k] + (1.0 - c.beta1) * gk;
                let vk = c.beta2 * v.data()[k] + (1.0 - c.beta2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let update = (mk / bc1) / ((vk / bc2).sqrt() + c.eps);
                let pk = p.data()[k];
                p.data_mut()[k] = pk - lr * update - lr * c.weight_decay * pk;
            }
        }
    }
}
