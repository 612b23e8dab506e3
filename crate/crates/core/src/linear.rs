//! Logistic regression and linear SVM, trained full-batch.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, sigmoid, Matrix};
use crate::neural::{bce_with_logit, check_targets};
use crate::rng::seeded;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Logreg,
    Linsvm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub kind: LinearKind,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    pub l2: f64,
    pub max_iter: usize,
    /// Stop once the (sub)gradient norm falls below this.
    pub tol: f64,
    /// First step size. Logistic regression adapts it by backtracking; the
    /// SVM decays it as `step / sqrt(1 + t)`.
    pub step: f64,
    /// Random N(0, 1) starting weights instead of zeros.
    pub init_seed: Option<u64>,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self::logreg()
    }
}

impl LinearConfig {
    pub fn logreg() -> Self {
        LinearConfig {
            l2: 1e-4,
            max_iter: 5000,
            tol: 1e-6,
            step: 1.0,
            init_seed: None,
        }
    }

    pub fn linsvm() -> Self {
        LinearConfig {
            l2: 1e-2,
            step: 0.1,
            ..Self::logreg()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::config("l2", "must be a finite number ≥ 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be at least 1"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::config("step", "must be positive"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::config("tol", "must be ≥ 0"));
        }
        Ok(())
    }
}

/// Outcome of an optimisation run. Non-convergence is not an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Objective value before the first step and after every step.
    pub losses: Vec<f64>,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    /// `wᵀx + b`
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// Sigmoid probabilities for logistic regression, raw margins for the SVM.
    pub fn predict_scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols != self.weights.len() {
            return Err(Error::shape(format!(
                "model has {} weights, input has {} columns",
                self.weights.len(),
                x.cols
            )));
        }
        Ok((0..x.rows)
            .map(|i| {
                let z = self.decision(x.row(i));
                match self.kind {
                    LinearKind::Logreg => sigmoid(z),
                    LinearKind::Linsvm => z,
                }
            })
            .collect())
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

fn check_finite(x: &Matrix) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Unsupported("non-finite input values".into()))
    }
}

fn initial_weights(d: usize, cfg: &LinearConfig) -> Vec<f64> {
    match cfg.init_seed {
        None => vec![0.0; d],
        Some(seed) => {
            let mut rng = seeded(seed);
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            (0..d).map(|_| normal.sample(&mut rng)).collect()
        }
    }
}

fn logreg_loss(x: &Matrix, y: &[f64], w: &[f64], b: f64, l2: f64) -> f64 {
    let mut loss = 0.0;
    for (i, &t) in y.iter().enumerate() {
        loss += bce_with_logit(dot(w, x.row(i)) + b, t);
    }
    loss / x.rows as f64 + 0.5 * l2 * dot(w, w)
}

/// Returns the loss and writes the gradient (weights then bias) into `g`.
fn logreg_loss_grad(x: &Matrix, y: &[f64], w: &[f64], b: f64, l2: f64, g: &mut [f64]) -> f64 {
    let d = w.len();
    let n = x.rows as f64;
    g.fill(0.0);
    let mut loss = 0.0;
    for (i, &t) in y.iter().enumerate() {
        let row = x.row(i);
        let z = dot(w, row) + b;
        loss += bce_with_logit(z, t);
        let r = sigmoid(z) - t;
        for (gj, xj) in g[..d].iter_mut().zip(row) {
            *gj += r * xj;
        }
        g[d] += r;
    }
    for (gj, wj) in g[..d].iter_mut().zip(w) {
        *gj = *gj / n + l2 * wj;
    }
    g[d] /= n;
    loss / n + 0.5 * l2 * dot(w, w)
}

/// L2-regularised cross-entropy `mean(BCE(σ(wᵀx+b), y)) + l2/2·‖w‖²`,
/// minimised by full-batch gradient descent with Armijo backtracking.
/// Each trial step is the Barzilai–Borwein estimate from the previous move,
/// so accepted steps never increase the loss. `y` may hold soft targets.
pub fn train_logreg(x: &Matrix, y: &[f64], cfg: &LinearConfig) -> Result<(LinearModel, FitReport)> {
    cfg.validate()?;
    check_targets(y, x.rows)?;
    check_finite(x)?;
    let d = x.cols;
    let mut theta = initial_weights(d, cfg);
    theta.push(0.0);
    let mut grad = vec![0.0; d + 1];
    let mut loss = logreg_loss_grad(x, y, &theta[..d], theta[d], cfg.l2, &mut grad);
    let mut losses = vec![loss];
    let mut step = cfg.step;
    let mut candidate = vec![0.0; d + 1];
    let mut new_grad = vec![0.0; d + 1];
    let mut grad_norm = libm::sqrt(dot(&grad, &grad));
    let mut iterations = 0;
    while grad_norm >= cfg.tol && iterations < cfg.max_iter {
        let g2 = grad_norm * grad_norm;
        let mut t = step;
        let new_loss = loop {
            for ((c, th), g) in candidate.iter_mut().zip(&theta).zip(&grad) {
                *c = th - t * g;
            }
            let trial = logreg_loss(x, y, &candidate[..d], candidate[d], cfg.l2);
            if trial <= loss - 0.5 * t * g2 || t < 1e-20 {
                break trial;
            }
            t *= 0.5;
        };
        if new_loss > loss {
            // no descent possible at machine precision
            break;
        }
        let new_loss = logreg_loss_grad(x, y, &candidate[..d], candidate[d], cfg.l2, &mut new_grad);
        let mut sy = 0.0;
        let mut yy = 0.0;
        for j in 0..=d {
            let s = candidate[j] - theta[j];
            let dy = new_grad[j] - grad[j];
            sy += s * dy;
            yy += dy * dy;
        }
        step = if sy > 0.0 && yy > 0.0 { sy / yy } else { t * 2.0 };
        core::mem::swap(&mut theta, &mut candidate);
        core::mem::swap(&mut grad, &mut new_grad);
        loss = new_loss;
        losses.push(loss);
        grad_norm = libm::sqrt(dot(&grad, &grad));
        iterations += 1;
    }
    let bias = theta.pop().unwrap_or(0.0);
    let model = LinearModel {
        weights: theta,
        bias,
        kind: LinearKind::Logreg,
        l2: cfg.l2,
    };
    if !model.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: iterations });
    }
    Ok((
        model,
        FitReport {
            converged: grad_norm < cfg.tol,
            iterations,
            grad_norm,
            losses,
        },
    ))
}

fn signed_labels(y: &[f64]) -> Result<Vec<f64>> {
    y.iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(-1.0)
            } else if v == 1.0 {
                Ok(1.0)
            } else {
                Err(Error::InvalidLabel(v))
            }
        })
        .collect()
}

/// `mean(max(0, 1 − s·(wᵀx+b))) + l2/2·‖w‖²` with s = ±1; also writes a subgradient.
fn hinge_objective(x: &Matrix, s: &[f64], w: &[f64], b: f64, l2: f64, g: &mut [f64]) -> f64 {
    let d = w.len();
    let n = x.rows as f64;
    g.fill(0.0);
    let mut loss = 0.0;
    for (i, &si) in s.iter().enumerate() {
        let row = x.row(i);
        let margin = si * (dot(w, row) + b);
        if margin < 1.0 {
            loss += 1.0 - margin;
            for (gj, xj) in g[..d].iter_mut().zip(row) {
                *gj -= si * xj;
            }
            g[d] -= si;
        }
    }
    for (gj, wj) in g[..d].iter_mut().zip(w) {
        *gj = *gj / n + l2 * wj;
    }
    g[d] /= n;
    loss / n + 0.5 * l2 * dot(w, w)
}

/// Mean hinge loss of a trained SVM on `(x, y)`, without the penalty.
pub fn hinge_loss(model: &LinearModel, x: &Matrix, y: &[f64]) -> Result<f64> {
    let s = signed_labels(y)?;
    let scores = model.predict_scores(x)?;
    Ok(scores
        .iter()
        .zip(&s)
        .map(|(z, si)| (1.0 - si * z).max(0.0))
        .sum::<f64>()
        / x.rows.max(1) as f64)
}

/// L2-regularised hinge loss minimised by full-batch subgradient descent
/// with step `step / sqrt(1 + t)`. The best iterate seen is returned.
pub fn train_linsvm(x: &Matrix, y: &[f64], cfg: &LinearConfig) -> Result<(LinearModel, FitReport)> {
    cfg.validate()?;
    if x.rows == 0 {
        return Err(Error::EmptyData);
    }
    if y.len() != x.rows {
        return Err(Error::shape(format!("{} labels for {} rows", y.len(), x.rows)));
    }
    check_finite(x)?;
    let s = signed_labels(y)?;
    let d = x.cols;
    let mut theta = initial_weights(d, cfg);
    theta.push(0.0);
    let mut g = vec![0.0; d + 1];
    let mut obj = hinge_objective(x, &s, &theta[..d], theta[d], cfg.l2, &mut g);
    let mut best = (obj, theta.clone());
    let mut losses = vec![obj];
    let mut grad_norm = libm::sqrt(dot(&g, &g));
    let mut iterations = 0;
    while grad_norm >= cfg.tol && iterations < cfg.max_iter {
        let eta = cfg.step / libm::sqrt(1.0 + iterations as f64);
        for (th, gj) in theta.iter_mut().zip(&g) {
            *th -= eta * gj;
        }
        obj = hinge_objective(x, &s, &theta[..d], theta[d], cfg.l2, &mut g);
        grad_norm = libm::sqrt(dot(&g, &g));
        if obj < best.0 {
            best = (obj, theta.clone());
        }
        losses.push(obj);
        iterations += 1;
    }
    let mut theta = best.1;
    let bias = theta.pop().unwrap_or(0.0);
    let model = LinearModel {
        weights: theta,
        bias,
        kind: LinearKind::Linsvm,
        l2: cfg.l2,
    };
    if !model.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: iterations });
    }
    Ok((
        model,
        FitReport {
            converged: grad_norm < cfg.tol,
            iterations,
            grad_norm,
            losses,
        },
    ))
}
