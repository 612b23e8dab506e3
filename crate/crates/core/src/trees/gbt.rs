use alloc::vec;
use alloc::vec::Vec;

use super::cart::{check_fit_inputs, presort, Grower};
use super::{GbtEnsemble, Tree, TreeConfig, TreeKind};
use crate::linalg::Matrix;
use crate::Result;

/// Stagewise least-squares boosting. `F₀` is the target mean; each stage is a
/// regression tree fitted to the current residuals, whose leaf means are the
/// exact line-search step for squared loss.
pub fn gbt_fit(x: &Matrix, targets: &[f64], cfg: &TreeConfig) -> Result<GbtEnsemble> {
    cfg.validate()?;
    check_fit_inputs(x, targets)?;
    let n = x.rows;
    let base_score = targets.iter().sum::<f64>() / n as f64;
    let sorted = presort(x);
    let mut sums = vec![0.0; n];
    let mut residuals = vec![0.0; n];
    let mut stages = Vec::with_capacity(cfg.n_stages);
    for _ in 0..cfg.n_stages {
        for i in 0..n {
            residuals[i] = targets[i] - (base_score + cfg.shrinkage * sums[i]);
        }
        let root = Grower::new(x, &residuals, TreeKind::RegressorMse, cfg).grow(sorted.clone(), (0..n).collect(), 0);
        let stage = Tree {
            root,
            kind: TreeKind::RegressorMse,
            max_depth: cfg.max_depth,
            n_features: x.cols,
            feature_names: Vec::new(),
        };
        for (i, s) in sums.iter_mut().enumerate() {
            *s += stage.predict_row(x.row(i));
        }
        stages.push(stage);
    }
    Ok(GbtEnsemble {
        base_score,
        stages,
        shrinkage: cfg.shrinkage,
        n_features: x.cols,
        feature_names: Vec::new(),
    })
}
