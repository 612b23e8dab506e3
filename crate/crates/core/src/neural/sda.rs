use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layer::prob_from_logit;
use super::mlp::{add_outer_flat, check_inputs, fit_stack, stack_forward, MlpModel, StackScratch};
use super::train::{run_epochs, Blocks, TrainLog};
use super::{Activation, LayerParams, TrainConfig};
use crate::linalg::{axpy, Matrix};
use crate::rng::{derive_seed, seeded, Rng};
use crate::{Error, Result};

/// Stacked denoising autoencoder. Decoder `l` reuses the transpose of
/// encoder `l`'s weights; only its bias is stored separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdaModel {
    pub encoder: Vec<LayerParams>,
    pub decoder_biases: Vec<Vec<f64>>,
    pub prediction_layer: LayerParams,
    pub noise_rate: f64,
    pub config: TrainConfig,
}

/// Masking noise: each coordinate is set to 0 independently with
/// probability `rate`.
pub fn corrupt(x: &[f64], rate: f64, rng: &mut Rng) -> Vec<f64> {
    let mut out = x.to_vec();
    corrupt_in_place(&mut out, rate, rng);
    out
}

fn corrupt_in_place(x: &mut [f64], rate: f64, rng: &mut Rng) {
    if rate <= 0.0 {
        return;
    }
    for v in x.iter_mut() {
        if rate >= 1.0 || rng.random_bool(rate) {
            *v = 0.0;
        }
    }
}

/// One encoder layer and its decoder bias, viewed as a trainable unit.
pub(crate) struct TiedLayer<'a> {
    pub(crate) layer: &'a mut LayerParams,
    pub(crate) decoder_bias: &'a mut Vec<f64>,
}

impl Blocks for TiedLayer<'_> {
    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.layer.weights.data.as_mut_slice(),
            self.layer.bias.as_mut_slice(),
            self.decoder_bias.as_mut_slice(),
        ]
    }

    fn block_sizes(&self) -> Vec<usize> {
        vec![
            self.layer.weights.data.len(),
            self.layer.bias.len(),
            self.decoder_bias.len(),
        ]
    }
}

struct TiedScratch {
    enc_pre: Vec<f64>,
    code: Vec<f64>,
    dec_pre: Vec<f64>,
    recon: Vec<f64>,
    dec_delta: Vec<f64>,
    enc_delta: Vec<f64>,
}

impl TiedScratch {
    fn new(layer: &LayerParams) -> Self {
        let (m, d) = (layer.fan_out(), layer.fan_in());
        TiedScratch {
            enc_pre: vec![0.0; m],
            code: vec![0.0; m],
            dec_pre: vec![0.0; d],
            recon: vec![0.0; d],
            dec_delta: vec![0.0; d],
            enc_delta: vec![0.0; m],
        }
    }
}

/// `s(Wᵀ·code + b_d)`, writing pre-activations too.
fn decode_into(layer: &LayerParams, decoder_bias: &[f64], code: &[f64], pre: &mut [f64], out: &mut [f64]) {
    pre.copy_from_slice(decoder_bias);
    layer.weights.matvec_t_acc(code, pre);
    for (o, &p) in out.iter_mut().zip(pre.iter()) {
        *o = layer.activation.apply(p);
    }
}

/// `½‖s(Wᵀ s(W·x̃ + b) + b_d) − x‖²` for one row; adds its gradient into
/// `[W, b, b_d]`. The shared weights collect both the encoder-path and the
/// decoder-path terms.
fn tied_row_grad(
    layer: &LayerParams,
    decoder_bias: &[f64],
    clean: &[f64],
    corrupted: &[f64],
    s: &mut TiedScratch,
    grads: &mut [Vec<f64>],
) -> f64 {
    layer.forward_into(corrupted, &mut s.enc_pre, &mut s.code);
    decode_into(layer, decoder_bias, &s.code, &mut s.dec_pre, &mut s.recon);
    let mut loss = 0.0;
    for j in 0..clean.len() {
        let r = s.recon[j] - clean[j];
        loss += 0.5 * r * r;
        s.dec_delta[j] = r * layer.activation.derivative(s.dec_pre[j], s.recon[j]);
    }
    let cols = layer.fan_in();
    // decoder path: ∂/∂Wᵀ = δ_dec · codeᵀ, i.e. ∂/∂W = code · δ_decᵀ
    add_outer_flat(&mut grads[0], cols, &s.code, &s.dec_delta);
    axpy(1.0, &s.dec_delta, &mut grads[2]);
    // encoder path
    layer.weights.matvec_into(&s.dec_delta, &mut s.enc_delta);
    for ((d, &z), &a) in s.enc_delta.iter_mut().zip(&s.enc_pre).zip(&s.code) {
        *d *= layer.activation.derivative(z, a);
    }
    add_outer_flat(&mut grads[0], cols, &s.enc_delta, corrupted);
    axpy(1.0, &s.enc_delta, &mut grads[1]);
    loss
}

/// Mean tied-weight reconstruction loss and gradient `[W, b, b_d]` over all
/// rows, with the corruption already applied in `corrupted`.
pub(crate) fn tied_loss_and_grad(
    layer: &LayerParams,
    decoder_bias: &[f64],
    clean: &Matrix,
    corrupted: &Matrix,
) -> (f64, Vec<Vec<f64>>) {
    let mut grads = vec![
        vec![0.0; layer.weights.data.len()],
        vec![0.0; layer.bias.len()],
        vec![0.0; decoder_bias.len()],
    ];
    let mut s = TiedScratch::new(layer);
    let mut loss = 0.0;
    for i in 0..clean.rows {
        loss += tied_row_grad(layer, decoder_bias, clean.row(i), corrupted.row(i), &mut s, &mut grads);
    }
    let scale = 1.0 / clean.rows as f64;
    grads.iter_mut().flatten().for_each(|g| *g *= scale);
    (loss * scale, grads)
}

pub(crate) fn tied_mean_loss(layer: &LayerParams, decoder_bias: &[f64], clean: &Matrix, corrupted: &Matrix) -> f64 {
    let mut s = TiedScratch::new(layer);
    let mut loss = 0.0;
    for i in 0..clean.rows {
        layer.forward_into(corrupted.row(i), &mut s.enc_pre, &mut s.code);
        decode_into(layer, decoder_bias, &s.code, &mut s.dec_pre, &mut s.recon);
        loss += s
            .recon
            .iter()
            .zip(clean.row(i))
            .map(|(r, c)| 0.5 * (r - c) * (r - c))
            .sum::<f64>();
    }
    loss / clean.rows as f64
}

impl SdaModel {
    pub fn init(
        n_inputs: usize,
        widths: &[usize],
        activation: Activation,
        noise_rate: f64,
        rng: &mut Rng,
    ) -> Self {
        let base = MlpModel::init(n_inputs, widths, activation, rng);
        SdaModel {
            decoder_biases: base.layers.iter().map(|l| vec![0.0; l.fan_in()]).collect(),
            encoder: base.layers,
            prediction_layer: base.prediction_layer,
            noise_rate,
            config: TrainConfig::default(),
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.encoder.first().map_or(self.prediction_layer.fan_in(), |l| l.fan_in())
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut s = StackScratch::new(&self.encoder);
        prob_from_logit(stack_forward(&self.encoder, &self.prediction_layer, x, &mut s))
    }

    /// Topmost encoder activations.
    pub fn features_row(&self, x: &[f64]) -> Vec<f64> {
        let mut s = StackScratch::new(&self.encoder);
        stack_forward(&self.encoder, &self.prediction_layer, x, &mut s);
        s.top().to_vec()
    }

    /// Encodes `input` (the input of layer `l`) without corruption.
    pub fn encode_layer(&self, l: usize, input: &[f64]) -> Vec<f64> {
        self.encoder[l].forward(input)
    }

    /// Decoder of layer `l`: `s(W_lᵀ·code + b_d)`.
    pub fn decode_layer(&self, l: usize, code: &[f64]) -> Vec<f64> {
        let layer = &self.encoder[l];
        let mut pre = vec![0.0; layer.fan_in()];
        let mut out = vec![0.0; layer.fan_in()];
        decode_into(layer, &self.decoder_biases[l], code, &mut pre, &mut out);
        out
    }

    pub fn reconstruct_layer(&self, l: usize, input: &[f64]) -> Vec<f64> {
        self.decode_layer(l, &self.encode_layer(l, input))
    }

    /// Mean reconstruction loss of layer `l` on uncorrupted inputs.
    pub fn reconstruction_loss(&self, l: usize, inputs: &Matrix) -> f64 {
        tied_mean_loss(&self.encoder[l], &self.decoder_biases[l], inputs, inputs)
    }

    /// Inputs of layer `l` for every row of `x` (clean encoding through the
    /// layers below).
    pub fn layer_inputs(&self, l: usize, x: &Matrix) -> Matrix {
        let mut current = x.clone();
        for layer in &self.encoder[..l] {
            let mut next = Matrix::zeros(current.rows, layer.fan_out());
            for i in 0..current.rows {
                next.row_mut(i).copy_from_slice(&layer.forward(current.row(i)));
            }
            current = next;
        }
        current
    }

    /// Greedy denoising pretraining of encoder layer `l` on `inputs`.
    pub(crate) fn pretrain_layer(
        &mut self,
        l: usize,
        inputs: &Matrix,
        cfg: &TrainConfig,
        rng: &mut Rng,
    ) -> Result<super::train::PhaseLog> {
        let noise = self.noise_rate;
        let initial = self.reconstruction_loss(l, inputs);
        let mut noise_rng = seeded(derive_seed(cfg.seed, &[0x5da, l as u64]));
        let mut scratch = TiedScratch::new(&self.encoder[l]);
        let mut corrupted = vec![0.0; inputs.cols];
        let mut unit = TiedLayer {
            layer: &mut self.encoder[l],
            decoder_bias: &mut self.decoder_biases[l],
        };
        run_epochs(&format!("pretrain_{l}"), &mut unit, inputs.rows, cfg, rng, initial, |u, rows, grads| {
            let mut loss = 0.0;
            for &i in rows {
                corrupted.copy_from_slice(inputs.row(i));
                corrupt_in_place(&mut corrupted, noise, &mut noise_rng);
                loss += tied_row_grad(u.layer, u.decoder_bias, inputs.row(i), &corrupted, &mut scratch, grads);
            }
            loss
        })
    }
}

/// Greedy layerwise denoising pretraining followed by supervised fine-tuning
/// of the whole encoder plus a sigmoid prediction layer.
pub fn train_sda(x: &Matrix, y: &[f64], cfg: &TrainConfig) -> Result<SdaModel> {
    train_sda_logged(x, y, cfg).map(|(m, _)| m)
}

pub fn train_sda_logged(x: &Matrix, y: &[f64], cfg: &TrainConfig) -> Result<(SdaModel, TrainLog)> {
    cfg.validate()?;
    check_inputs(x, y)?;
    let mut rng = seeded(cfg.seed);
    let widths = vec![cfg.hidden_multiplier * x.cols; cfg.n_hidden_layers];
    let mut model = SdaModel::init(x.cols, &widths, cfg.activation, cfg.noise_rate, &mut rng);
    model.config = cfg.clone();
    let mut log = TrainLog::default();

    for l in 0..model.encoder.len() {
        let inputs = model.layer_inputs(l, x);
        log.phases.push(model.pretrain_layer(l, &inputs, cfg, &mut rng)?);
    }

    let mut stack = MlpModel {
        layers: core::mem::take(&mut model.encoder),
        prediction_layer: model.prediction_layer.clone(),
        config: cfg.clone(),
    };
    let phase = fit_stack(&mut stack, x, y, cfg, &mut rng, "finetune")?;
    log.phases.push(phase);
    model.encoder = stack.layers;
    model.prediction_layer = stack.prediction_layer;
    if !model.encoder.iter().all(LayerParams::is_finite) {
        return Err(Error::NonFiniteLoss { epoch: cfg.epochs });
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn corruption_extremes() {
        let x = [1.0, -2.0, 3.5];
        let mut rng = seeded(1);
        assert_eq!(corrupt(&x, 0.0, &mut rng), x);
        assert_eq!(corrupt(&x, 1.0, &mut rng), [0.0; 3]);
    }

    #[test]
    fn corruption_rate_is_unbiased() {
        // χ² goodness of fit on the count of zeroed coordinates, 1 dof
        let n = 100_000;
        let rate = 0.2;
        let zeroed = corrupt(&vec![1.0; n], rate, &mut seeded(42))
            .iter()
            .filter(|&&v| v == 0.0)
            .count() as f64;
        let expected = rate * n as f64;
        let chi2 = (zeroed - expected).powi(2) / expected
            + (n as f64 - zeroed - (n as f64 - expected)).powi(2) / (n as f64 - expected);
        assert!(chi2 < 10.83, "χ² = {chi2}"); // p = 0.001
    }

    #[test]
    fn decoder_reads_encoder_weights() {
        let mut m = SdaModel::init(3, &[2], Activation::Linear, 0.0, &mut seeded(2));
        let code = [0.3, -0.7];
        let before = m.decode_layer(0, &code);
        let w = m.encoder[0].weights.get(1, 2);
        m.encoder[0].weights.set(1, 2, w + 1.0);
        let after = m.decode_layer(0, &code);
        // only output coordinate 2 moves, by code[1] · Δw
        assert_eq!(before[0], after[0]);
        assert_eq!(before[1], after[1]);
        assert!((after[2] - before[2] - (-0.7)).abs() < 1e-12);

        let t = m.encoder[0].weights.transpose();
        let mut expected = [0.0; 3];
        t.matvec_into(&code, &mut expected);
        assert_eq!(after, expected);
    }

    #[test]
    fn linear_autoencoder_reconstruction_error_decreases() {
        // rank-2 data in 6 dimensions, 3 hidden units
        let mut rng = seeded(11);
        let basis: Vec<[f64; 6]> = (0..2)
            .map(|_| core::array::from_fn(|_| StandardNormal.sample(&mut rng)))
            .collect();
        let rows: Vec<[f64; 6]> = (0..40)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                core::array::from_fn(|j| a * basis[0][j] + b * basis[1][j])
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let mut m = SdaModel::init(6, &[3], Activation::Linear, 0.0, &mut seeded(5));
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 40,
            learning_rate: 0.01,
            noise_rate: 0.0,
            ..TrainConfig::default()
        };
        let mut losses = vec![m.reconstruction_loss(0, &x)];
        for _ in 0..5 {
            m.pretrain_layer(0, &x, &cfg, &mut seeded(0)).unwrap();
            losses.push(m.reconstruction_loss(0, &x));
        }
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn training_is_reproducible_and_logs_each_phase() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [1.0, 1.0]]).unwrap();
        let y = [0.0, 1.0, 0.0, 1.0];
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let (a, log) = train_sda_logged(&x, &y, &cfg).unwrap();
        let b = train_sda(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        let names: Vec<&str> = log.phases.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["pretrain_0", "pretrain_1", "finetune"]);
        assert_eq!(a.encoder.len(), 2);
        assert_eq!(a.decoder_biases[0].len(), 2);
        assert_eq!(a.decoder_biases[1].len(), 4);
    }
}
