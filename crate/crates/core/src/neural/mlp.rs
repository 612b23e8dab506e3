use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layer::prob_from_logit;
use super::train::{run_epochs, Blocks, PhaseLog, TrainLog};
use super::{bce_with_logit, check_targets, Activation, LayerParams, TrainConfig};
use crate::linalg::{axpy, Matrix};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

/// Whether [`train_mlp`] optimises the prediction loss or only initialises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpObjective {
    Predict,
    /// Return the seeded initialisation without any updates.
    None,
}

/// Feedforward network: hidden layers and a single sigmoid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<LayerParams>,
    pub prediction_layer: LayerParams,
    pub config: TrainConfig,
}

/// Per-row activations of a hidden stack.
pub(crate) struct StackScratch {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl StackScratch {
    pub fn new(layers: &[LayerParams]) -> Self {
        let widths = || layers.iter().map(|l| vec![0.0; l.fan_out()]);
        StackScratch {
            pre: widths().collect(),
            act: widths().collect(),
            delta: widths().collect(),
        }
    }

    pub fn top(&self) -> &[f64] {
        self.act.last().map_or(&[], Vec::as_slice)
    }
}

/// Runs `x` through the hidden layers and returns the output logit.
pub(crate) fn stack_forward(
    layers: &[LayerParams],
    head: &LayerParams,
    x: &[f64],
    s: &mut StackScratch,
) -> f64 {
    for (l, layer) in layers.iter().enumerate() {
        let (done, rest) = s.act.split_at_mut(l);
        let input = if l == 0 { x } else { &done[l - 1] };
        layer.forward_into(input, &mut s.pre[l], &mut rest[0]);
    }
    let top = s.top();
    crate::linalg::dot(head.weights.row(0), top) + head.bias[0]
}

/// Accumulates `∂loss/∂θ` for one row given `∂loss/∂logit`. Gradient blocks
/// are ordered `[W_0, b_0, …, W_{L−1}, b_{L−1}, W_head, b_head]`.
pub(crate) fn stack_backward(
    layers: &[LayerParams],
    head: &LayerParams,
    x: &[f64],
    s: &mut StackScratch,
    dlogit: f64,
    grads: &mut [Vec<f64>],
) {
    let depth = layers.len();
    let top = s.act[depth - 1].as_slice();
    axpy(dlogit, top, &mut grads[2 * depth]);
    grads[2 * depth + 1][0] += dlogit;

    {
        let last = &layers[depth - 1];
        let delta = &mut s.delta[depth - 1];
        for (j, d) in delta.iter_mut().enumerate() {
            *d = dlogit
                * head.weights.data[j]
                * last.activation.derivative(s.pre[depth - 1][j], s.act[depth - 1][j]);
        }
    }
    for l in (0..depth).rev() {
        let input = if l == 0 { x } else { s.act[l - 1].as_slice() };
        add_outer_flat(&mut grads[2 * l], input.len(), &s.delta[l], input);
        axpy(1.0, &s.delta[l], &mut grads[2 * l + 1]);
        if l > 0 {
            let (lower, upper) = s.delta.split_at_mut(l);
            let below = &mut lower[l - 1];
            below.fill(0.0);
            layers[l].weights.matvec_t_acc(&upper[0], below);
            let below_layer = &layers[l - 1];
            for ((d, &z), &a) in below.iter_mut().zip(&s.pre[l - 1]).zip(&s.act[l - 1]) {
                *d *= below_layer.activation.derivative(z, a);
            }
        }
    }
}

/// `g += a · bᵀ` for a row-major `g` with `cols` columns.
#[inline]
pub(crate) fn add_outer_flat(g: &mut [f64], cols: usize, a: &[f64], b: &[f64]) {
    for (&ar, row) in a.iter().zip(g.chunks_exact_mut(cols)) {
        if ar != 0.0 {
            axpy(ar, b, row);
        }
    }
}

pub(crate) fn stack_blocks_mut<'a>(
    layers: &'a mut [LayerParams],
    head: &'a mut LayerParams,
) -> Vec<&'a mut [f64]> {
    let mut out = Vec::with_capacity(2 * layers.len() + 2);
    for l in layers.iter_mut() {
        out.push(l.weights.data.as_mut_slice());
        out.push(l.bias.as_mut_slice());
    }
    out.push(head.weights.data.as_mut_slice());
    out.push(head.bias.as_mut_slice());
    out
}

pub(crate) fn stack_block_sizes(layers: &[LayerParams], head: &LayerParams) -> Vec<usize> {
    layers
        .iter()
        .chain(core::iter::once(head))
        .flat_map(|l| [l.weights.data.len(), l.bias.len()])
        .collect()
}

/// Mean cross-entropy of a stack over the given rows.
pub(crate) fn stack_mean_loss(layers: &[LayerParams], head: &LayerParams, x: &Matrix, y: &[f64]) -> f64 {
    let mut s = StackScratch::new(layers);
    let total: f64 = (0..x.rows)
        .map(|i| bce_with_logit(stack_forward(layers, head, x.row(i), &mut s), y[i]))
        .sum();
    total / x.rows as f64
}

/// Summed loss and gradients of a stack over `rows`.
pub(crate) fn stack_batch_grad(
    layers: &[LayerParams],
    head: &LayerParams,
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    s: &mut StackScratch,
    grads: &mut [Vec<f64>],
) -> f64 {
    let mut loss = 0.0;
    for &i in rows {
        let row = x.row(i);
        let z = stack_forward(layers, head, row, s);
        loss += bce_with_logit(z, y[i]);
        let p = crate::linalg::sigmoid(z);
        stack_backward(layers, head, row, s, p - y[i], grads);
    }
    loss
}

impl Blocks for MlpModel {
    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        stack_blocks_mut(&mut self.layers, &mut self.prediction_layer)
    }

    fn block_sizes(&self) -> Vec<usize> {
        stack_block_sizes(&self.layers, &self.prediction_layer)
    }
}

impl MlpModel {
    /// Seeded Glorot initialisation with the given hidden widths.
    pub fn init(n_inputs: usize, widths: &[usize], activation: Activation, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = n_inputs;
        for &w in widths {
            layers.push(LayerParams::glorot(fan_in, w, activation, rng));
            fan_in = w;
        }
        let prediction_layer = LayerParams::glorot(fan_in, 1, Activation::Sigmoid, rng);
        MlpModel {
            layers,
            prediction_layer,
            config: TrainConfig::default(),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers.first().map_or(self.prediction_layer.fan_in(), |l| l.fan_in())
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers.iter().map(LayerParams::fan_out).collect()
    }

    pub fn logit_row(&self, x: &[f64]) -> f64 {
        let mut s = StackScratch::new(&self.layers);
        stack_forward(&self.layers, &self.prediction_layer, x, &mut s)
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        prob_from_logit(self.logit_row(x))
    }

    /// Activations of the topmost hidden layer.
    pub fn features_row(&self, x: &[f64]) -> Vec<f64> {
        let mut s = StackScratch::new(&self.layers);
        stack_forward(&self.layers, &self.prediction_layer, x, &mut s);
        s.top().to_vec()
    }

    /// Mean cross-entropy over all rows of `x`.
    pub fn mean_loss(&self, x: &Matrix, y: &[f64]) -> f64 {
        stack_mean_loss(&self.layers, &self.prediction_layer, x, y)
    }

    /// Mean loss and its gradient over all rows, in block order.
    pub(crate) fn loss_and_grad(&self, x: &Matrix, y: &[f64]) -> (f64, Vec<Vec<f64>>) {
        let mut grads = self.zero_grads();
        let mut s = StackScratch::new(&self.layers);
        let rows: Vec<usize> = (0..x.rows).collect();
        let loss = stack_batch_grad(&self.layers, &self.prediction_layer, x, y, &rows, &mut s, &mut grads);
        let scale = 1.0 / x.rows as f64;
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
        (loss * scale, grads)
    }
}

pub(crate) fn check_inputs(x: &Matrix, y: &[f64]) -> Result<()> {
    check_targets(y, x.rows)?;
    if !x.is_finite() {
        return Err(Error::Unsupported("inputs contain non-finite values".into()));
    }
    Ok(())
}

/// Trains a feedforward teacher with hidden widths `hidden_multiplier × D`
/// on binary cross-entropy by shuffled mini-batch descent.
pub fn train_mlp(x: &Matrix, y: &[f64], cfg: &TrainConfig, objective: MlpObjective) -> Result<MlpModel> {
    train_mlp_logged(x, y, cfg, objective).map(|(m, _)| m)
}

pub fn train_mlp_logged(
    x: &Matrix,
    y: &[f64],
    cfg: &TrainConfig,
    objective: MlpObjective,
) -> Result<(MlpModel, TrainLog)> {
    cfg.validate()?;
    check_inputs(x, y)?;
    let mut rng = seeded(cfg.seed);
    let widths = vec![cfg.hidden_multiplier * x.cols; cfg.n_hidden_layers];
    let mut model = MlpModel::init(x.cols, &widths, cfg.activation, &mut rng);
    model.config = cfg.clone();
    let mut log = TrainLog::default();
    if objective == MlpObjective::None {
        return Ok((model, log));
    }
    let phase = fit_stack(&mut model, x, y, cfg, &mut rng, "predict")?;
    log.phases.push(phase);
    if !model.layers.iter().all(LayerParams::is_finite) || !model.prediction_layer.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: cfg.epochs });
    }
    Ok((model, log))
}

pub(crate) fn fit_stack(
    model: &mut MlpModel,
    x: &Matrix,
    y: &[f64],
    cfg: &TrainConfig,
    rng: &mut Rng,
    name: &str,
) -> Result<PhaseLog> {
    let initial = model.mean_loss(x, y);
    let mut scratch = StackScratch::new(&model.layers);
    run_epochs(name, model, x.rows, cfg, rng, initial, |m, rows, grads| {
        stack_batch_grad(&m.layers, &m.prediction_layer, x, y, rows, &mut scratch, grads)
    })
}
