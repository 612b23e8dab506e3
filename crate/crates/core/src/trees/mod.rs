//! CART trees, gradient boosted regression trees, impurity-based feature
//! importance and Graphviz export.

mod cart;
mod dot;
mod gbt;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result};

pub use cart::cart_fit;
pub use dot::export_dot;
pub use gbt::gbt_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    /// Gini splits, leaves hold the fraction of class 1.
    ClassifierGini,
    /// Variance-reduction splits, leaves hold the target mean.
    RegressorMse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        n_samples: usize,
        impurity: f64,
    },
    Internal {
        /// Rows with `x[feature] <= threshold` go left.
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
        n_samples: usize,
        impurity: f64,
    },
}

impl TreeNode {
    pub fn n_samples(&self) -> usize {
        match self {
            TreeNode::Leaf { n_samples, .. } | TreeNode::Internal { n_samples, .. } => *n_samples,
        }
    }

    pub fn impurity(&self) -> f64 {
        match self {
            TreeNode::Leaf { impurity, .. } | TreeNode::Internal { impurity, .. } => *impurity,
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn count(&self) -> (usize, usize) {
        match self {
            TreeNode::Leaf { .. } => (1, 1),
            TreeNode::Internal { left, right, .. } => {
                let (ln, ll) = left.count();
                let (rn, rl) = right.count();
                (1 + ln + rn, ll + rl)
            }
        }
    }
}

/// Per-fit settings for single trees and boosted ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub n_stages: usize,
    pub shrinkage: f64,
    pub min_samples_split: usize,
    /// Unused by the deterministic split search.
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self::gbt()
    }
}

impl TreeConfig {
    /// 100 depth-3 stages with shrinkage 0.1.
    pub fn gbt() -> Self {
        TreeConfig {
            max_depth: Some(3),
            n_stages: 100,
            shrinkage: 0.1,
            min_samples_split: 2,
            seed: 0,
        }
    }

    /// A single tree grown until its leaves are pure.
    pub fn single_tree() -> Self {
        TreeConfig {
            max_depth: None,
            ..Self::gbt()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_stages == 0 {
            return Err(Error::config("n_stages", "must be at least 1"));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::config("shrinkage", "must lie in (0, 1]"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::config("min_samples_split", "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub root: TreeNode,
    pub kind: TreeKind,
    pub max_depth: Option<usize>,
    pub n_features: usize,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

fn check_width(expected: usize, x: &Matrix) -> Result<()> {
    if x.cols != expected {
        return Err(Error::shape(format!("model expects {expected} features, input has {}", x.cols)));
    }
    Ok(())
}

impl Tree {
    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        self.feature_names = names;
        self
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn n_nodes(&self) -> usize {
        self.root.count().0
    }

    pub fn n_leaves(&self) -> usize {
        self.root.count().1
    }

    /// Value of the leaf reached by `x`.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_width(self.n_features, x)?;
        Ok((0..x.rows).map(|i| self.predict_row(x.row(i))).collect())
    }

    /// Σ over internal nodes of `(n/N)·(impurity − nL/n·impurity_L − nR/n·impurity_R)`,
    /// credited to the split feature. Not normalised.
    pub fn raw_importance(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        let total = self.root.n_samples() as f64;
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            if let TreeNode::Internal {
                feature,
                left,
                right,
                n_samples,
                impurity,
                ..
            } = node
            {
                let n = *n_samples as f64;
                let nl = left.n_samples() as f64;
                let nr = right.n_samples() as f64;
                let decrease = impurity - nl / n * left.impurity() - nr / n * right.impurity();
                out[*feature] += n / total * decrease.max(0.0);
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }

    pub fn feature_importance(&self) -> Vec<f64> {
        normalize(self.raw_importance())
    }
}

/// `F₀ + ν·Σ_m h_m(x)` over squared-error regression stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtEnsemble {
    pub base_score: f64,
    pub stages: Vec<Tree>,
    pub shrinkage: f64,
    pub n_features: usize,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

impl GbtEnsemble {
    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        for stage in &mut self.stages {
            stage.feature_names = names.clone();
        }
        self.feature_names = names;
        self
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        for stage in &self.stages {
            sum += stage.predict_row(x);
        }
        self.base_score + self.shrinkage * sum
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_width(self.n_features, x)?;
        Ok((0..x.rows).map(|i| self.predict_row(x.row(i))).collect())
    }

    /// Predictions after 0, 1, …, M stages (M + 1 vectors).
    pub fn staged_predict(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        check_width(self.n_features, x)?;
        let mut sums = vec![0.0; x.rows];
        let mut out = Vec::with_capacity(self.stages.len() + 1);
        out.push(vec![self.base_score; x.rows]);
        for stage in &self.stages {
            for (i, s) in sums.iter_mut().enumerate() {
                *s += stage.predict_row(x.row(i));
            }
            out.push(sums.iter().map(|s| self.base_score + self.shrinkage * s).collect());
        }
        Ok(out)
    }

    /// Mean of the stages' unnormalised importances, normalised once.
    pub fn feature_importance(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_features];
        for stage in &self.stages {
            for (a, v) in acc.iter_mut().zip(stage.raw_importance()) {
                *a += v;
            }
        }
        let m = self.stages.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= m);
        normalize(acc)
    }
}

/// Either a single tree or a boosted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeModel {
    Tree(Tree),
    Gbt(GbtEnsemble),
}

impl TreeModel {
    pub fn n_features(&self) -> usize {
        match self {
            TreeModel::Tree(t) => t.n_features,
            TreeModel::Gbt(g) => g.n_features,
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self {
            TreeModel::Tree(t) => t.predict_row(x),
            TreeModel::Gbt(g) => g.predict_row(x),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            TreeModel::Tree(t) => t.predict(x),
            TreeModel::Gbt(g) => g.predict(x),
        }
    }

    pub fn feature_importance(&self) -> Vec<f64> {
        match self {
            TreeModel::Tree(t) => t.feature_importance(),
            TreeModel::Gbt(g) => g.feature_importance(),
        }
    }

    pub fn with_feature_names(self, names: Vec<String>) -> Self {
        match self {
            TreeModel::Tree(t) => TreeModel::Tree(t.with_feature_names(names)),
            TreeModel::Gbt(g) => TreeModel::Gbt(g.with_feature_names(names)),
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            TreeModel::Tree(t) => &t.feature_names,
            TreeModel::Gbt(g) => &g.feature_names,
        }
    }

    /// The tree to draw: the model itself, or boosting stage `stage`.
    pub fn tree_at(&self, stage: usize) -> Result<&Tree> {
        match self {
            TreeModel::Tree(t) if stage == 0 => Ok(t),
            TreeModel::Tree(_) => Err(Error::config("stage", "a single tree only has stage 0")),
            TreeModel::Gbt(g) => g.stages.get(stage).ok_or_else(|| {
                Error::config("stage", format!("ensemble has {} stages", g.stages.len()))
            }),
        }
    }
}

/// Scales to sum 1; an all-zero vector stays zero.
pub(crate) fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
    v
}
