use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Tree, TreeConfig, TreeKind, TreeNode};
use crate::linalg::Matrix;
use crate::{Error, Result};

/// Row indices sorted by each feature (value, then index).
pub(crate) fn presort(x: &Matrix) -> Vec<Vec<usize>> {
    (0..x.cols)
        .map(|f| {
            let mut idx: Vec<usize> = (0..x.rows).collect();
            idx.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
            idx
        })
        .collect()
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

pub(crate) struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    kind: TreeKind,
    max_depth: Option<usize>,
    min_samples_split: usize,
    go_left: Vec<bool>,
}

/// Midpoint between consecutive distinct values, kept strictly below `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

impl<'a> Grower<'a> {
    pub(crate) fn new(x: &'a Matrix, y: &'a [f64], kind: TreeKind, cfg: &TreeConfig) -> Self {
        Grower {
            x,
            y,
            kind,
            max_depth: cfg.max_depth,
            min_samples_split: cfg.min_samples_split,
            go_left: vec![false; x.rows],
        }
    }

    fn leaf_value(&self, rows: &[usize]) -> f64 {
        rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64
    }

    fn impurity(&self, rows: &[usize]) -> f64 {
        let n = rows.len() as f64;
        let mean = self.leaf_value(rows);
        match self.kind {
            TreeKind::ClassifierGini => 2.0 * mean * (1.0 - mean),
            TreeKind::RegressorMse => rows.iter().map(|&i| (self.y[i] - mean) * (self.y[i] - mean)).sum::<f64>() / n,
        }
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        let first = self.y[rows[0]];
        rows.iter().all(|&i| self.y[i] == first)
    }

    /// Best split over all features. The gain is the reduction of the
    /// node's total squared error (regression) or `n·gini` (classification).
    /// Ties keep the earliest candidate: lowest feature, then lowest threshold.
    fn best_split(&self, sorted: &[Vec<usize>], rows: &[usize]) -> Option<Split> {
        let n = rows.len();
        let nf = n as f64;
        let mean = self.leaf_value(rows);
        // centred targets keep the sums small; for 0/1 targets the class-1
        // count stands in for the sum
        let centre = match self.kind {
            TreeKind::ClassifierGini => 0.0,
            TreeKind::RegressorMse => mean,
        };
        let total: f64 = rows.iter().map(|&i| self.y[i] - centre).sum();
        let score = |s: f64, m: f64| match self.kind {
            TreeKind::ClassifierGini => (s * s + (m - s) * (m - s)) / m,
            TreeKind::RegressorMse => s * s / m,
        };
        let parent = score(total, nf);
        let mut best: Option<Split> = None;
        for (f, order) in sorted.iter().enumerate() {
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let i = order[k];
                left_sum += self.y[i] - centre;
                let a = self.x.get(i, f);
                let b = self.x.get(order[k + 1], f);
                if a >= b {
                    continue;
                }
                let nl = (k + 1) as f64;
                let gain = score(left_sum, nl) + score(total - left_sum, nf - nl) - parent;
                if best.as_ref().is_none_or(|s| gain > s.gain) {
                    best = Some(Split {
                        feature: f,
                        threshold: midpoint(a, b),
                        gain,
                    });
                }
            }
        }
        best
    }

    /// Grows a subtree over `sorted` (per-feature sorted rows of this node).
    pub(crate) fn grow(&mut self, sorted: Vec<Vec<usize>>, rows: Vec<usize>, depth: usize) -> TreeNode {
        let n_samples = rows.len();
        let impurity = self.impurity(&rows);
        let value = self.leaf_value(&rows);
        let leaf = TreeNode::Leaf {
            value,
            n_samples,
            impurity,
        };
        if n_samples < self.min_samples_split || self.max_depth.is_some_and(|d| depth >= d) || self.is_pure(&rows) {
            return leaf;
        }
        let Some(split) = self.best_split(&sorted, &rows) else {
            return leaf;
        };
        for &i in &rows {
            self.go_left[i] = self.x.get(i, split.feature) <= split.threshold;
        }
        let (mut left_sorted, mut right_sorted) = (Vec::with_capacity(sorted.len()), Vec::with_capacity(sorted.len()));
        for order in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| self.go_left[i]);
            left_sorted.push(l);
            right_sorted.push(r);
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| self.go_left[i]);
        let left = self.grow(left_sorted, left_rows, depth + 1);
        let right = self.grow(right_sorted, right_rows, depth + 1);
        TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
            n_samples,
            impurity,
        }
    }
}

pub(crate) fn check_fit_inputs(x: &Matrix, targets: &[f64]) -> Result<()> {
    if x.rows == 0 {
        return Err(Error::EmptyData);
    }
    if targets.len() != x.rows {
        return Err(Error::shape(format!("{} targets for {} rows", targets.len(), x.rows)));
    }
    if !x.is_finite() || targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Unsupported("non-finite input values".into()));
    }
    Ok(())
}

/// Greedy top-down CART. Classification targets must be 0 or 1.
pub fn cart_fit(x: &Matrix, targets: &[f64], cfg: &TreeConfig, kind: TreeKind) -> Result<Tree> {
    cfg.validate()?;
    check_fit_inputs(x, targets)?;
    if kind == TreeKind::ClassifierGini {
        if let Some(&bad) = targets.iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(Error::InvalidLabel(bad));
        }
    }
    let root = Grower::new(x, targets, kind, cfg).grow(presort(x), (0..x.rows).collect(), 0);
    Ok(Tree {
        root,
        kind,
        max_depth: cfg.max_depth,
        n_features: x.cols,
        feature_names: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    use crate::rng::seeded;

    fn random_matrix(rows: usize, cols: usize, seed: u64, integer: bool) -> Matrix {
        let mut rng = seeded(seed);
        let data = (0..rows * cols)
            .map(|_| {
                if integer {
                    f64::from(rng.random_range(0..8u8))
                } else {
                    rng.random_range(-2.0..2.0)
                }
            })
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn two_points_split_at_the_midpoint() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let t = cart_fit(&x, &[0.0, 1.0], &TreeConfig::single_tree(), TreeKind::ClassifierGini).unwrap();
        let TreeNode::Internal { threshold, left, right, .. } = &t.root else {
            panic!("expected a split")
        };
        assert_eq!(*threshold, 0.5);
        assert_eq!(left.impurity(), 0.0);
        assert_eq!(right.impurity(), 0.0);
        assert_eq!(t.n_leaves(), 2);
    }

    #[test]
    fn xor_needs_a_zero_gain_first_split() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]).unwrap();
        let y = [0.0, 1.0, 1.0, 0.0];
        let t = cart_fit(&x, &y, &TreeConfig::single_tree(), TreeKind::ClassifierGini).unwrap();
        assert_eq!(t.n_leaves(), 4);
        assert_eq!(t.predict(&x).unwrap(), y.to_vec());
        // the tie at the root goes to feature 0
        assert!(matches!(t.root, TreeNode::Internal { feature: 0, .. }));
    }

    #[test]
    fn constant_target_is_one_leaf() {
        let x = random_matrix(20, 3, 1, false);
        let t = cart_fit(&x, &[2.5; 20], &TreeConfig::single_tree(), TreeKind::RegressorMse).unwrap();
        assert_eq!(t.n_nodes(), 1);
        assert_eq!(t.predict_row(x.row(0)), 2.5);
    }

    #[test]
    fn constant_features_give_a_single_leaf() {
        let x = Matrix::zeros(6, 2);
        let y = [0.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let t = cart_fit(&x, &y, &TreeConfig::single_tree(), TreeKind::ClassifierGini).unwrap();
        assert_eq!(t.n_nodes(), 1);
        assert!((t.predict_row(&[0.0, 0.0]) - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn depth_limit_is_respected() {
        let x = random_matrix(100, 4, 2, false);
        let y: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        for d in 0..5 {
            let cfg = TreeConfig { max_depth: Some(d), ..TreeConfig::single_tree() };
            let t = cart_fit(&x, &y, &cfg, TreeKind::RegressorMse).unwrap();
            assert!(t.depth() <= d);
            assert!(t.n_leaves() <= 1 << d);
        }
    }

    #[test]
    fn min_samples_split_stops_growth() {
        let x = random_matrix(10, 1, 3, false);
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let cfg = TreeConfig { min_samples_split: 11, ..TreeConfig::single_tree() };
        assert_eq!(cart_fit(&x, &y, &cfg, TreeKind::RegressorMse).unwrap().n_nodes(), 1);
    }

    #[test]
    fn errors() {
        let x = Matrix::zeros(0, 2);
        assert!(matches!(cart_fit(&x, &[], &TreeConfig::gbt(), TreeKind::RegressorMse), Err(Error::EmptyData)));
        let x = Matrix::zeros(2, 1);
        assert!(matches!(
            cart_fit(&x, &[0.0, 0.5], &TreeConfig::gbt(), TreeKind::ClassifierGini),
            Err(Error::InvalidLabel(_))
        ));
    }

    fn check_counts(node: &TreeNode) {
        if let TreeNode::Internal { left, right, n_samples, impurity, .. } = node {
            assert_eq!(*n_samples, left.n_samples() + right.n_samples());
            assert!(*impurity >= 0.0);
            check_counts(left);
            check_counts(right);
        }
    }

    fn thresholds(node: &TreeNode, out: &mut Vec<(usize, f64)>) {
        if let TreeNode::Internal { feature, threshold, left, right, .. } = node {
            out.push((*feature, *threshold));
            thresholds(left, out);
            thresholds(right, out);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn unlimited_classifier_fits_consistent_data(seed in 0u64..10_000, n in 2usize..60) {
            let x = random_matrix(n, 3, seed, false);
            let mut rng = seeded(seed ^ 0xabc);
            let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
            let t = cart_fit(&x, &y, &TreeConfig::single_tree(), TreeKind::ClassifierGini).unwrap();
            prop_assert_eq!(t.predict(&x).unwrap(), y);
            check_counts(&t.root);
        }

        #[test]
        fn unlimited_regressor_interpolates_distinct_rows(seed in 0u64..10_000, n in 1usize..60) {
            let x = random_matrix(n, 2, seed, false);
            let mut rng = seeded(seed ^ 0xdef);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let t = cart_fit(&x, &y, &TreeConfig::single_tree(), TreeKind::RegressorMse).unwrap();
            prop_assert_eq!(t.predict(&x).unwrap(), y);
        }

        #[test]
        fn shifting_a_feature_shifts_its_thresholds(seed in 0u64..10_000, shift in -50i32..50, f in 0usize..3) {
            // integer-valued data keeps midpoints exact under the shift
            let x = random_matrix(40, 3, seed, true);
            let mut rng = seeded(seed ^ 0x123);
            let y: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut shifted = x.clone();
            for i in 0..40 {
                shifted.set(i, f, x.get(i, f) + f64::from(shift));
            }
            let cfg = TreeConfig { max_depth: Some(4), ..TreeConfig::gbt() };
            let a = cart_fit(&x, &y, &cfg, TreeKind::RegressorMse).unwrap();
            let b = cart_fit(&shifted, &y, &cfg, TreeKind::RegressorMse).unwrap();
            let (mut ta, mut tb) = (Vec::new(), Vec::new());
            thresholds(&a.root, &mut ta);
            thresholds(&b.root, &mut tb);
            prop_assert_eq!(ta.len(), tb.len());
            for ((fa, va), (fb, vb)) in ta.iter().zip(&tb) {
                prop_assert_eq!(fa, fb);
                let expected = if *fa == f { va + f64::from(shift) } else { *va };
                prop_assert_eq!(*vb, expected);
            }
            prop_assert_eq!(a.predict(&x).unwrap(), b.predict(&shifted).unwrap());
        }
    }
}
