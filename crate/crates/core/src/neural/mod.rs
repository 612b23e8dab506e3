//! Teacher networks with hand-derived gradients: a feedforward network, a
//! stacked denoising autoencoder with tied weights, and an LSTM over the
//! daily variables. All arithmetic is `f64`.

mod gradcheck;
mod layer;
mod lstm;
mod mlp;
mod optim;
mod sda;
mod train;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::TemporalTensor;
use crate::linalg::Matrix;
use crate::{Error, Result};

pub use gradcheck::{gradient_check, GradCheckKind, GradCheckReport, GradCheckSpec};
pub use layer::{Activation, LayerParams};
pub use lstm::{lstm_step, train_lstm, train_lstm_logged, GateParams, LstmModel, LstmParams};
pub use mlp::{train_mlp, train_mlp_logged, MlpModel, MlpObjective};
pub use optim::{rmsprop_step, OptimizerKind};
pub use sda::{corrupt, train_sda, train_sda_logged, SdaModel};
pub use train::TrainLog;

/// Optimisation settings shared by all teachers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    /// Hidden width as a multiple of the input width.
    pub hidden_multiplier: usize,
    pub n_hidden_layers: usize,
    pub activation: Activation,
    /// Masking probability for denoising pretraining.
    pub noise_rate: f64,
    /// LSTM state size; `None` means `hidden_multiplier` × number of temporal variables.
    pub lstm_hidden: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 0.001,
            optimizer: OptimizerKind::Sgd,
            batch_size: 32,
            hidden_multiplier: 2,
            n_hidden_layers: 2,
            activation: Activation::Sigmoid,
            noise_rate: 0.2,
            lstm_hidden: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults for the recurrent teacher: RMSprop instead of plain SGD.
    pub fn lstm() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Rmsprop,
            ..TrainConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be a positive number"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.hidden_multiplier == 0 {
            return Err(Error::config("hidden_multiplier", "must be at least 1"));
        }
        if self.n_hidden_layers == 0 {
            return Err(Error::config("n_hidden_layers", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::config("noise_rate", "must lie in [0, 1)"));
        }
        if self.lstm_hidden == Some(0) {
            return Err(Error::config("lstm_hidden", "must be at least 1"));
        }
        Ok(())
    }
}

/// Input handed to a trained teacher.
#[derive(Debug, Clone, Copy)]
pub enum NeuralInput<'a> {
    /// Flattened N × D design matrix (feedforward and autoencoder teachers).
    Flat(&'a Matrix),
    /// N × T × P daily values (LSTM teacher).
    Sequence(&'a TemporalTensor),
}

impl NeuralInput<'_> {
    pub fn n_samples(&self) -> usize {
        match self {
            NeuralInput::Flat(m) => m.rows,
            NeuralInput::Sequence(t) => t.n_samples,
        }
    }
}

/// Any trained teacher, serialized with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeuralModel {
    Mlp(MlpModel),
    Sda(SdaModel),
    Lstm(LstmModel),
}

impl NeuralModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            NeuralModel::Mlp(_) => "mlp",
            NeuralModel::Sda(_) => "sda",
            NeuralModel::Lstm(_) => "lstm",
        }
    }

    /// Width of the extracted feature vector.
    pub fn feature_width(&self) -> usize {
        match self {
            NeuralModel::Mlp(m) => m.prediction_layer.fan_in(),
            NeuralModel::Sda(m) => m.prediction_layer.fan_in(),
            NeuralModel::Lstm(m) => m.t_steps * m.params.hidden_size,
        }
    }

    fn flat<'a>(&self, input: NeuralInput<'a>, d: usize) -> Result<&'a Matrix> {
        match input {
            NeuralInput::Flat(m) if m.cols == d => Ok(m),
            NeuralInput::Flat(m) => Err(Error::shape(format!(
                "{} model expects {d} input columns, got {}",
                self.kind_name(),
                m.cols
            ))),
            NeuralInput::Sequence(_) => Err(Error::shape(format!(
                "{} model takes a flattened design matrix",
                self.kind_name()
            ))),
        }
    }

    fn sequence<'a>(&self, input: NeuralInput<'a>) -> Result<&'a TemporalTensor> {
        let NeuralModel::Lstm(m) = self else {
            unreachable!()
        };
        match input {
            NeuralInput::Sequence(t) if t.t_steps == m.t_steps && t.n_vars == m.params.n_inputs => Ok(t),
            NeuralInput::Sequence(t) => Err(Error::shape(format!(
                "lstm expects T={} P={}, got T={} P={}",
                m.t_steps, m.params.n_inputs, t.t_steps, t.n_vars
            ))),
            NeuralInput::Flat(_) => Err(Error::shape("lstm model takes the temporal tensor")),
        }
    }

    /// Soft prediction scores in (0, 1), one per sample.
    pub fn predict_soft(&self, input: NeuralInput<'_>) -> Result<Vec<f64>> {
        match self {
            NeuralModel::Mlp(m) => {
                let x = self.flat(input, m.n_inputs())?;
                Ok((0..x.rows).map(|i| m.predict_row(x.row(i))).collect())
            }
            NeuralModel::Sda(m) => {
                let x = self.flat(input, m.n_inputs())?;
                Ok((0..x.rows).map(|i| m.predict_row(x.row(i))).collect())
            }
            NeuralModel::Lstm(m) => {
                let x = self.sequence(input)?;
                Ok((0..x.n_samples).map(|i| m.predict_sample(x.sample(i))).collect())
            }
        }
    }

    /// Activations of the topmost hidden layer (feedforward / autoencoder)
    /// or the flattened hidden-state sequence `(h_1, …, h_T)` (LSTM).
    pub fn extract_features(&self, input: NeuralInput<'_>) -> Result<Matrix> {
        let width = self.feature_width();
        let n = input.n_samples();
        let mut out = Matrix::zeros(n, width);
        match self {
            NeuralModel::Mlp(m) => {
                let x = self.flat(input, m.n_inputs())?;
                for i in 0..n {
                    out.row_mut(i).copy_from_slice(&m.features_row(x.row(i)));
                }
            }
            NeuralModel::Sda(m) => {
                let x = self.flat(input, m.n_inputs())?;
                for i in 0..n {
                    out.row_mut(i).copy_from_slice(&m.features_row(x.row(i)));
                }
            }
            NeuralModel::Lstm(m) => {
                let x = self.sequence(input)?;
                for i in 0..n {
                    out.row_mut(i).copy_from_slice(&m.features_sample(x.sample(i)));
                }
            }
        }
        Ok(out)
    }
}

/// Checks targets lie in [0, 1] and match the row count.
pub(crate) fn check_targets(y: &[f64], n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if y.len() != n {
        return Err(Error::shape(format!("{} targets for {n} rows", y.len())));
    }
    if let Some(&bad) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidLabel(bad));
    }
    Ok(())
}

/// Binary cross-entropy of a logit `z` against target `y`, computed stably.
#[inline]
pub(crate) fn bce_with_logit(z: f64, y: f64) -> f64 {
    // softplus(z) − y·z
    let softplus = if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    };
    softplus - y * z
}
