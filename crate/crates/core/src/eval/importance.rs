use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::trees::{normalize, TreeModel};
use crate::{Error, Result};

/// Feature importance averaged over cross-validation fold models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub feature_names: Vec<String>,
    /// One score per feature, summing to 1 unless no model ever split.
    pub scores: Vec<f64>,
    /// The `k` highest scores, descending; ties keep column order.
    pub top_k: Vec<(String, f64)>,
    pub n_models: usize,
}

impl ImportanceReport {
    /// Rank (0 = most important) of every feature.
    pub fn ranks(&self) -> Vec<usize> {
        let order = descending(&self.scores);
        let mut ranks = alloc::vec![0; order.len()];
        for (r, &i) in order.iter().enumerate() {
            ranks[i] = r;
        }
        ranks
    }
}

fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Mean of the models' normalised importance vectors, renormalised.
pub fn aggregate_importance(models: &[TreeModel], feature_names: &[String], k: usize) -> Result<ImportanceReport> {
    let first = models.first().ok_or(Error::EmptyData)?;
    let d = first.n_features();
    if feature_names.len() != d {
        return Err(Error::shape(format!("{} feature names for {d} features", feature_names.len())));
    }
    let mut acc = alloc::vec![0.0; d];
    for m in models {
        if m.n_features() != d {
            return Err(Error::shape(format!("model with {} features, expected {d}", m.n_features())));
        }
        for (a, v) in acc.iter_mut().zip(m.feature_importance()) {
            *a += v;
        }
    }
    let n = models.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    let scores = normalize(acc);
    let top_k = descending(&scores)
        .into_iter()
        .take(k)
        .map(|i| (feature_names[i].clone(), scores[i]))
        .collect();
    Ok(ImportanceReport {
        feature_names: feature_names.to_vec(),
        scores,
        top_k,
        n_models: models.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::trees::{cart_fit, gbt_fit, TreeConfig, TreeKind};
    use alloc::vec;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("f{i}")).collect()
    }

    /// A stump splitting on `feature` out of `d`.
    fn stump(feature: usize, d: usize) -> TreeModel {
        let mut rows = vec![vec![0.0; d]; 4];
        for (i, r) in rows.iter_mut().enumerate() {
            r[feature] = i as f64;
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let cfg = TreeConfig { max_depth: Some(1), ..TreeConfig::single_tree() };
        TreeModel::Tree(cart_fit(&x, &[0.0, 0.0, 1.0, 1.0], &cfg, TreeKind::RegressorMse).unwrap())
    }

    #[test]
    fn identical_models_give_the_single_model_importance() {
        let x = Matrix::from_rows(&[[0.0, 3.0], [1.0, 1.0], [2.0, 2.0], [3.0, 0.5], [4.0, 7.0]]).unwrap();
        let cfg = TreeConfig { n_stages: 5, ..TreeConfig::gbt() };
        let m = TreeModel::Gbt(gbt_fit(&x, &[0.1, 0.3, 0.2, 0.9, 0.4], &cfg).unwrap());
        let single = m.feature_importance();
        let rep = aggregate_importance(&[m.clone(), m.clone(), m], &names(2), 2).unwrap();
        for (a, b) in rep.scores.iter().zip(&single) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(rep.n_models, 3);
    }

    #[test]
    fn disjoint_stumps_split_evenly() {
        let rep = aggregate_importance(&[stump(1, 4), stump(3, 4)], &names(4), 3).unwrap();
        assert_eq!(rep.scores, [0.0, 0.5, 0.0, 0.5]);
        assert_eq!(rep.top_k, vec![("f1".into(), 0.5), ("f3".into(), 0.5), ("f0".into(), 0.0)]);
        assert_eq!(rep.ranks(), [2, 0, 3, 1]);
    }

    #[test]
    fn rejects_empty_and_mismatched_inputs() {
        assert_eq!(aggregate_importance(&[], &names(2), 1), Err(Error::EmptyData));
        assert!(matches!(aggregate_importance(&[stump(0, 2)], &names(3), 1), Err(Error::Shape(_))));
        assert!(matches!(
            aggregate_importance(&[stump(0, 2), stump(0, 3)], &names(2), 1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn scores_sum_to_one() {
        let models: Vec<TreeModel> = (0..5).map(|i| stump(i % 3, 3)).collect();
        let rep = aggregate_importance(&models, &names(3), 10).unwrap();
        assert!((rep.scores.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert_eq!(rep.top_k.len(), 3);
        assert!(rep.top_k.windows(2).all(|w| w[0].1 >= w[1].1));
    }
}
