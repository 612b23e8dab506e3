use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::linalg::{sigmoid, Matrix};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    /// Identity; used for linear autoencoders and tests.
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => libm::tanh(z),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a = s(z)`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// One affine layer followed by an activation: `s(W·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// fan_out × fan_in
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl LayerParams {
    /// Uniform weights in ±√(6 / (fan_in + fan_out)), zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let mut weights = Matrix::zeros(fan_out, fan_in);
        for w in &mut weights.data {
            *w = rng.random_range(-limit..limit);
        }
        LayerParams {
            weights,
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        LayerParams {
            weights: Matrix::zeros(fan_out, fan_in),
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.cols
    }

    pub fn fan_out(&self) -> usize {
        self.weights.rows
    }

    /// Writes the pre-activation into `pre` and the activation into `out`.
    #[inline]
    pub fn forward_into(&self, x: &[f64], pre: &mut [f64], out: &mut [f64]) {
        self.weights.matvec_into(x, pre);
        for ((p, b), o) in pre.iter_mut().zip(&self.bias).zip(out.iter_mut()) {
            *p += b;
            *o = self.activation.apply(*p);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut pre = vec![0.0; self.fan_out()];
        let mut out = vec![0.0; self.fan_out()];
        self.forward_into(x, &mut pre, &mut out);
        out
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|b| b.is_finite())
    }
}

/// Largest and smallest probabilities a sigmoid head reports, so scores stay
/// strictly inside (0, 1) even when the logit saturates.
pub(crate) fn prob_from_logit(z: f64) -> f64 {
    const LO: f64 = 1e-300;
    const HI: f64 = 1.0 - f64::EPSILON / 2.0;
    sigmoid(z).clamp(LO, HI)
}
