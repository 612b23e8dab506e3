use alloc::vec::Vec;

use super::{Dataset, VarKind};
use crate::{Error, Result};

/// Fills every missing cell: binary variables take their observed majority
/// value (ties go to 0), all others their observed mean. Temporal statistics
/// are pooled over samples and days. Missing masks are left untouched, so
/// imputing twice gives the same result as imputing once.
pub fn impute_missing(ds: &Dataset) -> Result<Dataset> {
    let mut out = ds.clone();
    let q = ds.q_static();

    for j in 0..q {
        let fill = fill_value(ds.static_kinds[j], ds.static_observed(j))
            .ok_or_else(|| Error::NoObservedValues(ds.static_names[j].clone()))?;
        for i in 0..ds.n_samples() {
            if ds.static_missing[i * q + j] {
                out.static_values.set(i, j, fill);
            }
        }
    }

    let t = &ds.temporal;
    for k in 0..ds.p_temporal() {
        let fill = fill_value(ds.temporal_kinds[k], ds.temporal_observed(k))
            .ok_or_else(|| Error::NoObservedValues(ds.temporal_names[k].clone()))?;
        for i in 0..t.n_samples {
            for d in 0..t.t_steps {
                let idx = t.index(i, d, k);
                if ds.temporal_missing[idx] {
                    out.temporal.values[idx] = fill;
                }
            }
        }
    }
    Ok(out)
}

fn fill_value(kind: VarKind, observed: impl Iterator<Item = f64>) -> Option<f64> {
    let observed: Vec<f64> = observed.collect();
    if observed.is_empty() {
        return None;
    }
    Some(match kind {
        VarKind::Binary => {
            let ones = observed.iter().filter(|&&v| v == 1.0).count();
            if 2 * ones > observed.len() {
                1.0
            } else {
                0.0
            }
        }
        VarKind::Continuous => observed.iter().sum::<f64>() / observed.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny;
    use super::*;
    use alloc::vec;

    const NAN: f64 = f64::NAN;

    #[test]
    fn binary_majority_and_continuous_mean() {
        let ds = tiny(
            &[[1.0, 1.0], [1.0, 2.0], [0.0, NAN], [NAN, NAN]],
            vec![0.0; 4],
            1,
            1,
        );
        let out = impute_missing(&ds).unwrap();
        assert_eq!(out.static_values.get(3, 0), 1.0);
        assert_eq!(out.static_values.get(2, 1), 1.5);
        assert_eq!(out.static_values.get(3, 1), 1.5);
        assert!(out.is_imputed());
        assert_eq!(out.static_missing, ds.static_missing);
    }

    #[test]
    fn binary_tie_goes_to_zero() {
        let ds = tiny(&[[1.0, 0.5], [0.0, 0.5], [NAN, 0.5]], vec![0.0; 3], 1, 1);
        for _ in 0..3 {
            assert_eq!(impute_missing(&ds).unwrap().static_values.get(2, 0), 0.0);
        }
    }

    #[test]
    fn temporal_mean_pools_days() {
        // one sample-day missing; observed values over (sample, day) are 1, 2, 3, 6
        let ds = tiny(
            &[[0.0, 1.0], [1.0, 2.0]],
            vec![1.0, 2.0, 3.0, 6.0, NAN, 7.0],
            3,
            1,
        );
        let out = impute_missing(&ds).unwrap();
        // the 7 on day 2 of sample 1 is also observed
        assert_eq!(out.temporal.get(1, 1, 0), (1.0 + 2.0 + 3.0 + 6.0 + 7.0) / 5.0);
    }

    #[test]
    fn variable_without_observations_is_an_error() {
        let ds = tiny(&[[0.0, NAN], [1.0, NAN]], vec![0.0; 2], 1, 1);
        assert_eq!(impute_missing(&ds), Err(Error::NoObservedValues("b".into())));
    }

    #[test]
    fn imputation_is_idempotent() {
        let ds = tiny(
            &[[1.0, 0.3], [NAN, NAN], [0.0, 2.0], [1.0, NAN]],
            vec![1.0, NAN, 0.0, 4.0, NAN, 1.0, 2.0, NAN],
            2,
            1,
        );
        let once = impute_missing(&ds).unwrap();
        let twice = impute_missing(&once).unwrap();
        assert_eq!(once, twice);
    }
}
