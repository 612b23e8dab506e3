use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Rmsprop,
}

pub(crate) const RMSPROP_DECAY: f64 = 0.9;
pub(crate) const RMSPROP_EPS: f64 = 1e-8;

/// One RMSprop update, in place:
/// `cache ← decay·cache + (1−decay)·g²`, `θ ← θ − lr·g / (√cache + eps)`.
pub fn rmsprop_step(param: &mut [f64], grad: &[f64], cache: &mut [f64], lr: f64, decay: f64, eps: f64) {
    debug_assert_eq!(param.len(), grad.len());
    debug_assert_eq!(param.len(), cache.len());
    for ((p, &g), c) in param.iter_mut().zip(grad).zip(cache.iter_mut()) {
        *c = decay * *c + (1.0 - decay) * g * g;
        *p -= lr * g / (libm::sqrt(*c) + eps);
    }
}

/// Applies updates to a model's parameter blocks, keeping per-block state.
#[derive(Debug, Clone)]
pub(crate) struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    cache: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, block_sizes: impl Iterator<Item = usize>) -> Self {
        let cache = match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Rmsprop => block_sizes.map(|n| vec![0.0; n]).collect(),
        };
        Optimizer { kind, lr, cache }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) {
        debug_assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    crate::linalg::axpy(-self.lr, g, p);
                }
            }
            OptimizerKind::Rmsprop => {
                for ((p, g), c) in params.into_iter().zip(grads).zip(&mut self.cache) {
                    rmsprop_step(p, g, c, self.lr, RMSPROP_DECAY, RMSPROP_EPS);
                }
            }
        }
    }
}
