use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::Optimizer;
use super::TrainConfig;
use crate::rng::Rng;
use crate::{Error, Result};

/// Loss trace of one optimisation phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLog {
    pub name: String,
    /// Mean loss over all rows before the first update.
    pub initial_loss: f64,
    /// Mean per-row loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub phases: Vec<PhaseLog>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.phases.last().and_then(|p| p.epoch_losses.last().copied())
    }
}

/// Parameter blocks of a model, in a fixed order shared with its gradients.
pub(crate) trait Blocks {
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;
    fn block_sizes(&self) -> Vec<usize>;

    fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.block_sizes().into_iter().map(|n| vec![0.0; n]).collect()
    }
}

/// Shuffled mini-batch training. `batch_grad` receives the row indices of one
/// batch, must add the summed per-row gradients into the zeroed buffers and
/// return the summed loss; gradients are averaged before the update.
pub(crate) fn run_epochs<M: Blocks>(
    name: &str,
    model: &mut M,
    n: usize,
    cfg: &TrainConfig,
    rng: &mut Rng,
    initial_loss: f64,
    mut batch_grad: impl FnMut(&M, &[usize], &mut [Vec<f64>]) -> f64,
) -> Result<PhaseLog> {
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, model.block_sizes().into_iter());
    let mut grads = model.zero_grads();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    if !initial_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for g in grads.iter_mut() {
                g.fill(0.0);
            }
            total += batch_grad(model, batch, &mut grads);
            let scale = 1.0 / batch.len() as f64;
            for g in grads.iter_mut() {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
            optimizer.step(model.blocks_mut(), &grads);
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        epoch_losses.push(mean);
    }
    Ok(PhaseLog {
        name: name.into(),
        initial_loss,
        epoch_losses,
    })
}
