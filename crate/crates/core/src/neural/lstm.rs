use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layer::prob_from_logit;
use super::mlp::add_outer_flat;
use super::train::{run_epochs, Blocks, TrainLog};
use super::{bce_with_logit, check_targets, Activation, LayerParams, TrainConfig};
use crate::data::TemporalTensor;
use crate::linalg::{axpy, dot, sigmoid, Matrix};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

/// Weights of one gate: `W_h·h_{t−1} + W_x·x_t + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    /// H × H
    pub wh: Matrix,
    /// H × P
    pub wx: Matrix,
    pub b: Vec<f64>,
}

impl GateParams {
    fn glorot(hidden: usize, inputs: usize, rng: &mut Rng) -> Self {
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let limit = libm::sqrt(6.0 / (fan_in + rows) as f64);
            let mut m = Matrix::zeros(rows, cols);
            for w in &mut m.data {
                *w = rng.random_range(-limit..limit);
            }
            m
        };
        // fan-in of a gate unit covers both the recurrent and the input term
        let fan_in = hidden + inputs;
        GateParams {
            wh: uniform(hidden, hidden, fan_in),
            wx: uniform(hidden, inputs, fan_in),
            b: vec![0.0; hidden],
        }
    }

    pub fn zeros(hidden: usize, inputs: usize) -> Self {
        GateParams {
            wh: Matrix::zeros(hidden, hidden),
            wx: Matrix::zeros(hidden, inputs),
            b: vec![0.0; hidden],
        }
    }

    #[inline]
    fn preactivation(&self, h_prev: &[f64], x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.wh.row(j), h_prev) + dot(self.wx.row(j), x) + self.b[j];
        }
    }
}

/// LSTM cell parameters plus the prediction layer over the flattened
/// hidden states `(h_1, …, h_T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub forget: GateParams,
    pub input: GateParams,
    pub candidate: GateParams,
    pub output: GateParams,
    pub hidden_size: usize,
    pub n_inputs: usize,
    pub prediction_layer: LayerParams,
}

impl LstmParams {
    pub fn init(n_inputs: usize, hidden_size: usize, t_steps: usize, rng: &mut Rng) -> Self {
        LstmParams {
            forget: GateParams::glorot(hidden_size, n_inputs, rng),
            input: GateParams::glorot(hidden_size, n_inputs, rng),
            candidate: GateParams::glorot(hidden_size, n_inputs, rng),
            output: GateParams::glorot(hidden_size, n_inputs, rng),
            hidden_size,
            n_inputs,
            prediction_layer: LayerParams::glorot(t_steps * hidden_size, 1, Activation::Sigmoid, rng),
        }
    }

    pub fn zeros(n_inputs: usize, hidden_size: usize, t_steps: usize) -> Self {
        LstmParams {
            forget: GateParams::zeros(hidden_size, n_inputs),
            input: GateParams::zeros(hidden_size, n_inputs),
            candidate: GateParams::zeros(hidden_size, n_inputs),
            output: GateParams::zeros(hidden_size, n_inputs),
            hidden_size,
            n_inputs,
            prediction_layer: LayerParams::zeros(t_steps * hidden_size, 1, Activation::Sigmoid),
        }
    }

    fn gates(&self) -> [&GateParams; 4] {
        [&self.forget, &self.input, &self.candidate, &self.output]
    }
}

impl Blocks for LstmParams {
    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(14);
        for g in [&mut self.forget, &mut self.input, &mut self.candidate, &mut self.output] {
            out.push(g.wh.data.as_mut_slice());
            out.push(g.wx.data.as_mut_slice());
            out.push(g.b.as_mut_slice());
        }
        out.push(self.prediction_layer.weights.data.as_mut_slice());
        out.push(self.prediction_layer.bias.as_mut_slice());
        out
    }

    fn block_sizes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .gates()
            .iter()
            .flat_map(|g| [g.wh.data.len(), g.wx.data.len(), g.b.len()])
            .collect();
        out.push(self.prediction_layer.weights.data.len());
        out.push(1);
        out
    }
}

/// One LSTM step:
///
/// ```text
/// f = σ(W_fh·h + W_fx·x + b_f)     i = σ(W_ih·h + W_ix·x + b_i)
/// C̃ = tanh(W_Ch·h + W_Cx·x + b_C)  o = σ(W_oh·h + W_ox·x + b_o)
/// C' = f ∗ C + i ∗ C̃               h' = o ∗ tanh(C')
/// ```
pub fn lstm_step(params: &LstmParams, x_t: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = params.hidden_size;
    if x_t.len() != params.n_inputs || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::shape(format!(
            "lstm_step expects x:{} h:{h} C:{h}, got x:{} h:{} C:{}",
            params.n_inputs,
            x_t.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut cache = StepCache::new(h);
    forward_step(params, x_t, h_prev, c_prev, &mut cache);
    Ok((cache.h, cache.c))
}

#[derive(Clone)]
struct StepCache {
    f: Vec<f64>,
    i: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl StepCache {
    fn new(h: usize) -> Self {
        StepCache {
            f: vec![0.0; h],
            i: vec![0.0; h],
            g: vec![0.0; h],
            o: vec![0.0; h],
            c: vec![0.0; h],
            tanh_c: vec![0.0; h],
            h: vec![0.0; h],
        }
    }
}

fn forward_step(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64], s: &mut StepCache) {
    p.forget.preactivation(h_prev, x, &mut s.f);
    p.input.preactivation(h_prev, x, &mut s.i);
    p.candidate.preactivation(h_prev, x, &mut s.g);
    p.output.preactivation(h_prev, x, &mut s.o);
    for j in 0..p.hidden_size {
        s.f[j] = sigmoid(s.f[j]);
        s.i[j] = sigmoid(s.i[j]);
        s.g[j] = libm::tanh(s.g[j]);
        s.o[j] = sigmoid(s.o[j]);
        s.c[j] = s.f[j] * c_prev[j] + s.i[j] * s.g[j];
        s.tanh_c[j] = libm::tanh(s.c[j]);
        s.h[j] = s.o[j] * s.tanh_c[j];
    }
}

/// Forward caches for one sequence plus backward scratch.
struct SeqScratch {
    steps: Vec<StepCache>,
    zeros: Vec<f64>,
    dh: Vec<f64>,
    dc: Vec<f64>,
    dh_prev: Vec<f64>,
    da: [Vec<f64>; 4],
}

impl SeqScratch {
    fn new(h: usize, t: usize) -> Self {
        SeqScratch {
            steps: vec![StepCache::new(h); t],
            zeros: vec![0.0; h],
            dh: vec![0.0; h],
            dc: vec![0.0; h],
            dh_prev: vec![0.0; h],
            da: [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]],
        }
    }
}

/// Unrolls from `h_0 = C_0 = 0` and returns the output logit.
fn forward_sequence(p: &LstmParams, seq: &[f64], s: &mut SeqScratch) -> f64 {
    let n_in = p.n_inputs;
    let hsz = p.hidden_size;
    let mut logit = p.prediction_layer.bias[0];
    for t in 0..s.steps.len() {
        let (done, rest) = s.steps.split_at_mut(t);
        let (h_prev, c_prev) = match done.last() {
            Some(prev) => (prev.h.as_slice(), prev.c.as_slice()),
            None => (s.zeros.as_slice(), s.zeros.as_slice()),
        };
        forward_step(p, &seq[t * n_in..(t + 1) * n_in], h_prev, c_prev, &mut rest[0]);
        logit += dot(&p.prediction_layer.weights.data[t * hsz..(t + 1) * hsz], &rest[0].h);
    }
    logit
}

/// Backpropagation through time for one sequence. Gradient blocks follow
/// [`Blocks`] order: `(W_h, W_x, b)` for forget, input, candidate, output,
/// then the prediction layer.
fn backward_sequence(p: &LstmParams, seq: &[f64], s: &mut SeqScratch, dlogit: f64, grads: &mut [Vec<f64>]) {
    let n_in = p.n_inputs;
    let hsz = p.hidden_size;
    let t_steps = s.steps.len();
    let head_w = &p.prediction_layer.weights.data;
    for t in 0..t_steps {
        axpy(dlogit, &s.steps[t].h, &mut grads[12][t * hsz..(t + 1) * hsz]);
    }
    grads[13][0] += dlogit;

    s.dh.fill(0.0);
    s.dc.fill(0.0);
    let gates = p.gates();
    for t in (0..t_steps).rev() {
        let x = &seq[t * n_in..(t + 1) * n_in];
        let step = &s.steps[t];
        let (h_prev, c_prev) = if t == 0 {
            (s.zeros.as_slice(), s.zeros.as_slice())
        } else {
            (s.steps[t - 1].h.as_slice(), s.steps[t - 1].c.as_slice())
        };
        axpy(dlogit, &head_w[t * hsz..(t + 1) * hsz], &mut s.dh);
        for j in 0..hsz {
            let dh = s.dh[j];
            let d_o = dh * step.tanh_c[j];
            let dc = s.dc[j] + dh * step.o[j] * (1.0 - step.tanh_c[j] * step.tanh_c[j]);
            let d_f = dc * c_prev[j];
            let d_i = dc * step.g[j];
            let d_g = dc * step.i[j];
            s.da[0][j] = d_f * step.f[j] * (1.0 - step.f[j]);
            s.da[1][j] = d_i * step.i[j] * (1.0 - step.i[j]);
            s.da[2][j] = d_g * (1.0 - step.g[j] * step.g[j]);
            s.da[3][j] = d_o * step.o[j] * (1.0 - step.o[j]);
            // carried to step t−1
            s.dc[j] = dc * step.f[j];
        }
        s.dh_prev.fill(0.0);
        for (k, gate) in gates.iter().enumerate() {
            let da = &s.da[k];
            add_outer_flat(&mut grads[3 * k], hsz, da, h_prev);
            add_outer_flat(&mut grads[3 * k + 1], n_in, da, x);
            axpy(1.0, da, &mut grads[3 * k + 2]);
            gate.wh.matvec_t_acc(da, &mut s.dh_prev);
        }
        core::mem::swap(&mut s.dh, &mut s.dh_prev);
    }
}

/// Trained recurrent teacher over the daily variables only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub params: LstmParams,
    pub t_steps: usize,
    pub config: TrainConfig,
}

impl LstmModel {
    pub fn new(params: LstmParams, t_steps: usize) -> Self {
        LstmModel {
            params,
            t_steps,
            config: TrainConfig::lstm(),
        }
    }

    fn scratch(&self) -> SeqScratch {
        SeqScratch::new(self.params.hidden_size, self.t_steps)
    }

    pub fn logit_sample(&self, seq: &[f64]) -> f64 {
        forward_sequence(&self.params, seq, &mut self.scratch())
    }

    /// `seq` is one sample's T·P values, time-major.
    pub fn predict_sample(&self, seq: &[f64]) -> f64 {
        prob_from_logit(self.logit_sample(seq))
    }

    /// Flattened `(h_1, …, h_T)`.
    pub fn features_sample(&self, seq: &[f64]) -> Vec<f64> {
        let mut s = self.scratch();
        forward_sequence(&self.params, seq, &mut s);
        s.steps.iter().flat_map(|st| st.h.iter().copied()).collect()
    }

    pub fn mean_loss(&self, x: &TemporalTensor, y: &[f64]) -> f64 {
        let mut s = self.scratch();
        let total: f64 = (0..x.n_samples)
            .map(|i| bce_with_logit(forward_sequence(&self.params, x.sample(i), &mut s), y[i]))
            .sum();
        total / x.n_samples as f64
    }

    pub(crate) fn loss_and_grad(&self, x: &TemporalTensor, y: &[f64]) -> (f64, Vec<Vec<f64>>) {
        let mut grads = self.params.zero_grads();
        let mut s = self.scratch();
        let rows: Vec<usize> = (0..x.n_samples).collect();
        let loss = batch_grad(&self.params, x, y, &rows, &mut s, &mut grads);
        let scale = 1.0 / x.n_samples as f64;
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
        (loss * scale, grads)
    }
}

fn batch_grad(
    p: &LstmParams,
    x: &TemporalTensor,
    y: &[f64],
    rows: &[usize],
    s: &mut SeqScratch,
    grads: &mut [Vec<f64>],
) -> f64 {
    let mut loss = 0.0;
    for &i in rows {
        let seq = x.sample(i);
        let z = forward_sequence(p, seq, s);
        loss += bce_with_logit(z, y[i]);
        backward_sequence(p, seq, s, sigmoid(z) - y[i], grads);
    }
    loss
}

/// Trains the LSTM teacher by full backpropagation through time.
pub fn train_lstm(x: &TemporalTensor, y: &[f64], cfg: &TrainConfig) -> Result<LstmModel> {
    train_lstm_logged(x, y, cfg).map(|(m, _)| m)
}

pub fn train_lstm_logged(x: &TemporalTensor, y: &[f64], cfg: &TrainConfig) -> Result<(LstmModel, TrainLog)> {
    cfg.validate()?;
    check_targets(y, x.n_samples)?;
    if x.t_steps == 0 {
        return Err(Error::config("t_steps", "must be at least 1"));
    }
    if x.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Unsupported("inputs contain non-finite values".into()));
    }
    let hidden = cfg.lstm_hidden.unwrap_or(cfg.hidden_multiplier * x.n_vars);
    let mut rng = seeded(cfg.seed);
    let mut model = LstmModel {
        params: LstmParams::init(x.n_vars, hidden, x.t_steps, &mut rng),
        t_steps: x.t_steps,
        config: cfg.clone(),
    };
    let initial = model.mean_loss(x, y);
    let mut scratch = model.scratch();
    let phase = run_epochs("predict", &mut model.params, x.n_samples, cfg, &mut rng, initial, |p, rows, grads| {
        batch_grad(p, x, y, rows, &mut scratch, grads)
    })?;
    Ok((model, TrainLog { phases: vec![phase] }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_give_half_open_gates_and_zero_state() {
        let p = LstmParams::zeros(2, 3, 1);
        let (h, c) = lstm_step(&p, &[0.7, -1.2], &[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(h, [0.0; 3]);
        assert_eq!(c, [0.0; 3]);
        let mut cache = StepCache::new(3);
        forward_step(&p, &[0.7, -1.2], &[0.0; 3], &[0.0; 3], &mut cache);
        assert_eq!(cache.f, [0.5; 3]);
        assert_eq!(cache.i, [0.5; 3]);
        assert_eq!(cache.o, [0.5; 3]);
        assert_eq!(cache.g, [0.0; 3]);
    }

    #[test]
    fn saturated_forget_gate_keeps_the_cell() {
        let mut p = LstmParams::zeros(1, 2, 1);
        p.forget.b = vec![50.0; 2];
        let c_prev = [0.8, -1.7];
        let (_, c) = lstm_step(&p, &[0.3], &[0.1, 0.2], &c_prev).unwrap();
        for (a, b) in c.iter().zip(&c_prev) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn scalar_step_matches_hand_calculation() {
        let mut p = LstmParams::zeros(1, 1, 1);
        p.forget = GateParams { wh: Matrix::from_vec(1, 1, vec![0.5]).unwrap(), wx: Matrix::from_vec(1, 1, vec![1.0]).unwrap(), b: vec![0.0] };
        p.input = GateParams { wh: Matrix::from_vec(1, 1, vec![-1.0]).unwrap(), wx: Matrix::from_vec(1, 1, vec![0.5]).unwrap(), b: vec![0.1] };
        p.candidate = GateParams { wh: Matrix::from_vec(1, 1, vec![2.0]).unwrap(), wx: Matrix::from_vec(1, 1, vec![-0.5]).unwrap(), b: vec![0.0] };
        p.output = GateParams { wh: Matrix::from_vec(1, 1, vec![0.0]).unwrap(), wx: Matrix::from_vec(1, 1, vec![1.5]).unwrap(), b: vec![-0.2] };
        let (x, h, c): (f64, f64, f64) = (0.4, 0.3, 0.6);
        // hand evaluation of the five equations
        let f = 1.0 / (1.0 + (-(0.5 * h + 1.0 * x)).exp());
        let i = 1.0 / (1.0 + (-(-1.0 * h + 0.5 * x + 0.1)).exp());
        let g = (2.0 * h - 0.5 * x).tanh();
        let o = 1.0 / (1.0 + (-(1.5 * x - 0.2)).exp());
        let c_new = f * c + i * g;
        let h_new = o * c_new.tanh();
        let (h_out, c_out) = lstm_step(&p, &[x], &[h], &[c]).unwrap();
        assert!((c_out[0] - c_new).abs() < 1e-14);
        assert!((h_out[0] - h_new).abs() < 1e-14);
        // independently evaluated: f=σ(0.55), i=σ(0)=0.5, C̃=tanh(0.4), o=σ(0.4)
        assert!((c_out[0] - 0.5704558357340929).abs() < 1e-14);
        assert!((h_out[0] - 0.3087396146271601).abs() < 1e-14);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = LstmParams::zeros(2, 3, 1);
        assert!(matches!(lstm_step(&p, &[0.0], &[0.0; 3], &[0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn hidden_state_is_bounded() {
        let mut rng = seeded(3);
        let p = LstmParams::init(2, 4, 1, &mut rng);
        let mut h = vec![0.0; 4];
        let mut c = vec![0.0; 4];
        for t in 0..20 {
            let x = [libm::sin(t as f64) * 5.0, 3.0];
            let (h2, c2) = lstm_step(&p, &x, &h, &c).unwrap();
            assert!(h2.iter().all(|v| v.abs() <= 1.0));
            h = h2;
            c = c2;
        }
    }
}
