//! Central finite-difference check of every analytic gradient.

use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::lstm::{LstmModel, LstmParams};
use super::mlp::MlpModel;
use super::sda::{corrupt, tied_loss_and_grad, tied_mean_loss, SdaModel, TiedLayer};
use super::train::Blocks;
use super::Activation;
use crate::data::TemporalTensor;
use crate::linalg::Matrix;
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradCheckKind {
    /// Cross-entropy of a feedforward network.
    Mlp,
    /// Tied-weight denoising reconstruction loss of one autoencoder layer.
    Sda,
    /// Cross-entropy of the LSTM with its prediction layer, through time.
    Lstm,
}

impl core::str::FromStr for GradCheckKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" | "dnn" => Ok(GradCheckKind::Mlp),
            "sda" => Ok(GradCheckKind::Sda),
            "lstm" => Ok(GradCheckKind::Lstm),
            _ => Err(Error::Unknown {
                what: "model kind",
                name: s.into(),
            }),
        }
    }
}

/// Size of the random instance to check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckSpec {
    pub kind: GradCheckKind,
    pub n_inputs: usize,
    pub hidden: usize,
    pub n_hidden_layers: usize,
    /// Sequence length (LSTM only).
    pub steps: usize,
    pub n_samples: usize,
    pub noise_rate: f64,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        Self::mlp()
    }
}

impl GradCheckSpec {
    /// 7 → 5 → 5 → 1 feedforward network.
    pub fn mlp() -> Self {
        GradCheckSpec {
            kind: GradCheckKind::Mlp,
            n_inputs: 7,
            hidden: 5,
            n_hidden_layers: 2,
            steps: 1,
            n_samples: 6,
            noise_rate: 0.0,
            activation: Activation::Sigmoid,
            seed: 1,
        }
    }

    /// One tied-weight layer, 6 → 4, masking noise 0.2.
    pub fn sda() -> Self {
        GradCheckSpec {
            kind: GradCheckKind::Sda,
            n_inputs: 6,
            hidden: 4,
            n_hidden_layers: 1,
            noise_rate: 0.2,
            ..GradCheckSpec::mlp()
        }
    }

    /// P = 3, H = 4, T = 3.
    pub fn lstm() -> Self {
        GradCheckSpec {
            kind: GradCheckKind::Lstm,
            n_inputs: 3,
            hidden: 4,
            n_hidden_layers: 1,
            steps: 3,
            ..GradCheckSpec::mlp()
        }
    }

    pub fn for_kind(kind: GradCheckKind) -> Self {
        match kind {
            GradCheckKind::Mlp => Self::mlp(),
            GradCheckKind::Sda => Self::sda(),
            GradCheckKind::Lstm => Self::lstm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub kind: GradCheckKind,
    pub n_params: usize,
    /// max over parameters of |analytic − numeric| / max(1e-8, |analytic| + |numeric|)
    pub max_rel_error: f64,
    pub worst_block: usize,
    pub worst_index: usize,
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix { rows, cols, data }
}

fn random_labels(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect()
}

fn jitter_biases<M: Blocks>(model: &mut M, bias_blocks: &[usize], rng: &mut Rng) {
    let mut blocks = model.blocks_mut();
    for &b in bias_blocks {
        for v in blocks[b].iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
}

/// Compares `analytic` against central differences of `loss`, perturbing
/// each parameter in place and restoring it afterwards.
fn compare<M: Blocks>(model: &mut M, analytic: &[Vec<f64>], eps: f64, loss: impl Fn(&M) -> f64) -> (f64, usize, usize, usize) {
    let sizes = model.block_sizes();
    let mut worst = (0.0f64, 0, 0);
    let mut count = 0;
    for (b, &len) in sizes.iter().enumerate() {
        for k in 0..len {
            let original = model.blocks_mut()[b][k];
            model.blocks_mut()[b][k] = original + eps;
            let plus = loss(model);
            model.blocks_mut()[b][k] = original - eps;
            let minus = loss(model);
            model.blocks_mut()[b][k] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[b][k];
            let rel = libm::fabs(a - numeric) / (libm::fabs(a) + libm::fabs(numeric)).max(1e-8);
            if rel > worst.0 {
                worst = (rel, b, k);
            }
            count += 1;
        }
    }
    (worst.0, worst.1, worst.2, count)
}

/// Builds a random small instance of `spec.kind` and returns the largest
/// relative disagreement between its analytic gradient and central finite
/// differences `(L(θ+ε) − L(θ−ε)) / 2ε`.
pub fn gradient_check(spec: &GradCheckSpec, eps: f64) -> Result<GradCheckReport> {
    if spec.n_inputs == 0 || spec.hidden == 0 || spec.n_samples == 0 || spec.steps == 0 {
        return Err(Error::config("spec", "all dimensions must be at least 1"));
    }
    if !(eps > 0.0) {
        return Err(Error::config("eps", "must be positive"));
    }
    let mut rng = seeded(spec.seed);
    let (max_rel_error, worst_block, worst_index, n_params) = match spec.kind {
        GradCheckKind::Mlp => {
            let widths = alloc::vec![spec.hidden; spec.n_hidden_layers.max(1)];
            let mut model = MlpModel::init(spec.n_inputs, &widths, spec.activation, &mut rng);
            let bias_blocks: Vec<usize> = (0..=widths.len()).map(|l| 2 * l + 1).collect();
            jitter_biases(&mut model, &bias_blocks, &mut rng);
            let x = normal_matrix(spec.n_samples, spec.n_inputs, &mut rng);
            let y = random_labels(spec.n_samples, &mut rng);
            let (_, analytic) = model.loss_and_grad(&x, &y);
            compare(&mut model, &analytic, eps, |m| m.mean_loss(&x, &y))
        }
        GradCheckKind::Sda => {
            let mut model = SdaModel::init(spec.n_inputs, &[spec.hidden], spec.activation, spec.noise_rate, &mut rng);
            for v in model.encoder[0].bias.iter_mut().chain(model.decoder_biases[0].iter_mut()) {
                *v = rng.random_range(-0.5..0.5);
            }
            let clean = normal_matrix(spec.n_samples, spec.n_inputs, &mut rng);
            // one fixed corruption draw, so the loss is a deterministic function of θ
            let mut corrupted = clean.clone();
            for i in 0..clean.rows {
                let row = corrupt(clean.row(i), spec.noise_rate, &mut rng);
                corrupted.row_mut(i).copy_from_slice(&row);
            }
            let (_, analytic) = tied_loss_and_grad(&model.encoder[0], &model.decoder_biases[0], &clean, &corrupted);
            let mut unit = TiedLayer {
                layer: &mut model.encoder[0],
                decoder_bias: &mut model.decoder_biases[0],
            };
            compare(&mut unit, &analytic, eps, |u| {
                tied_mean_loss(u.layer, u.decoder_bias, &clean, &corrupted)
            })
        }
        GradCheckKind::Lstm => {
            let params = LstmParams::init(spec.n_inputs, spec.hidden, spec.steps, &mut rng);
            let mut model = LstmModel::new(params, spec.steps);
            jitter_biases(&mut model.params, &[2, 5, 8, 11, 13], &mut rng);
            let x = TemporalTensor {
                n_samples: spec.n_samples,
                t_steps: spec.steps,
                n_vars: spec.n_inputs,
                values: normal_matrix(spec.n_samples, spec.steps * spec.n_inputs, &mut rng).data,
            };
            let y = random_labels(spec.n_samples, &mut rng);
            let (_, analytic) = model.loss_and_grad(&x, &y);
            let t_steps = model.t_steps;
            compare(&mut model.params, &analytic, eps, |p| {
                LstmModel::new(p.clone(), t_steps).mean_loss(&x, &y)
            })
        }
    };
    Ok(GradCheckReport {
        kind: spec.kind,
        n_params,
        max_rel_error,
        worst_block,
        worst_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_teacher_gradient_matches_finite_differences() {
        for spec in [GradCheckSpec::mlp(), GradCheckSpec::sda(), GradCheckSpec::lstm()] {
            let report = gradient_check(&spec, 1e-5).unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn parameter_counts() {
        // 7·5+5 + 5·5+5 + 5+1
        assert_eq!(gradient_check(&GradCheckSpec::mlp(), 1e-5).unwrap().n_params, 76);
        // 4·6 + 4 + 6
        assert_eq!(gradient_check(&GradCheckSpec::sda(), 1e-5).unwrap().n_params, 34);
        // 4·(16+12+4) + 12 + 1
        assert_eq!(gradient_check(&GradCheckSpec::lstm(), 1e-5).unwrap().n_params, 141);
    }

    #[test]
    fn other_activations_also_check_out() {
        for act in [Activation::Tanh, Activation::Linear] {
            let spec = GradCheckSpec { activation: act, ..GradCheckSpec::mlp() };
            assert!(gradient_check(&spec, 1e-5).unwrap().max_rel_error < 1e-4);
            let spec = GradCheckSpec { activation: act, ..GradCheckSpec::sda() };
            assert!(gradient_check(&spec, 1e-5).unwrap().max_rel_error < 1e-4);
        }
    }
}
