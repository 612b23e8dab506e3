//! AUC, the repeated k-fold protocol, the benchmark matrix and importance
//! aggregation.

mod cv;
mod importance;
mod report;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::distill::{StudentKind, TeacherKind};
use crate::{Error, Result};

pub use cv::{
    assemble, cross_validate, cross_validate_many, fold_plan, holdout_split, plan_jobs, run_job, CvConfig, CvData, CvResult,
    CvRun, FoldJob, FoldOutcome, MethodOutcome, MethodSettings, SkippedFold,
};
pub use importance::{aggregate_importance, ImportanceReport};
pub use report::{
    benchmark_report, render_table, run_benchmark, BenchCell, BenchGroup, BenchOutcome, BenchPlan, BenchmarkReport,
    CellReport, CellStatus, DiffEntry, DiffKind,
};

/// Area under the ROC curve: the fraction of (positive, negative) pairs in
/// which the positive scores higher, ties counting one half. Computed from
/// average ranks in O(n log n).
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidLabel(f64::from(bad)));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Unsupported("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // rank sums are kept doubled so ties (half ranks) stay integral
    let mut pos_rank_sum2: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (1-based start+1..=end) share their mean
        let twice_mean_rank = (start + 1 + end) as u64;
        let positives = order[start..end].iter().filter(|&&i| labels[i] == 1).count() as u64;
        pos_rank_sum2 += positives * twice_mean_rank;
        start = end;
    }
    let p = n_pos as u64;
    let twice_u = pos_rank_sum2 - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * (n_pos as f64) * (n_neg as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Svm,
    Lr,
    Dt,
    Gbt,
}

/// One method of the benchmark, written as in the result tables:
/// `SVM`, `LR`, `DT`, `GBT`, `DNN`, `LR-SDA`, `GBTmimic-LSTM`,
/// `DTmimic-LR-DNN`, …
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodSpec {
    Baseline(BaselineKind),
    Neural { teacher: TeacherKind, lr_head: bool },
    Mimic { student: StudentKind, teacher: TeacherKind, lr_head: bool },
}

/// Row group of the result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodGroup {
    Baseline,
    NnBased,
    Mimic,
}

impl MethodGroup {
    pub fn title(self) -> &'static str {
        match self {
            MethodGroup::Baseline => "Baseline",
            MethodGroup::NnBased => "NN-based",
            MethodGroup::Mimic => "Mimic",
        }
    }
}

impl MethodSpec {
    pub fn id(&self) -> String {
        match *self {
            MethodSpec::Baseline(b) => String::from(match b {
                BaselineKind::Svm => "SVM",
                BaselineKind::Lr => "LR",
                BaselineKind::Dt => "DT",
                BaselineKind::Gbt => "GBT",
            }),
            MethodSpec::Neural { teacher, lr_head } => {
                format!("{}{}", if lr_head { "LR-" } else { "" }, teacher.as_str())
            }
            MethodSpec::Mimic {
                student,
                teacher,
                lr_head,
            } => format!(
                "{}mimic-{}{}",
                match student {
                    StudentKind::Gbt => "GBT",
                    StudentKind::Tree => "DT",
                },
                if lr_head { "LR-" } else { "" },
                teacher.as_str()
            ),
        }
    }

    pub fn group(&self) -> MethodGroup {
        match self {
            MethodSpec::Baseline(_) => MethodGroup::Baseline,
            MethodSpec::Neural { .. } => MethodGroup::NnBased,
            MethodSpec::Mimic { .. } => MethodGroup::Mimic,
        }
    }

    pub fn teacher(&self) -> Option<TeacherKind> {
        match *self {
            MethodSpec::Baseline(_) => None,
            MethodSpec::Neural { teacher, .. } | MethodSpec::Mimic { teacher, .. } => Some(teacher),
        }
    }

    /// The method whose scores a mimic model regresses on.
    pub fn soft_target_source(&self) -> Option<MethodSpec> {
        match *self {
            MethodSpec::Mimic { teacher, lr_head, .. } => Some(MethodSpec::Neural { teacher, lr_head }),
            _ => None,
        }
    }

    /// The full method list of the main comparison table, in table order.
    pub fn all() -> Vec<MethodSpec> {
        let mut out: Vec<MethodSpec> = [BaselineKind::Svm, BaselineKind::Lr, BaselineKind::Dt, BaselineKind::Gbt]
            .into_iter()
            .map(MethodSpec::Baseline)
            .collect();
        for lr_head in [false, true] {
            for teacher in TeacherKind::ALL {
                out.push(MethodSpec::Neural { teacher, lr_head });
            }
        }
        for student in [StudentKind::Gbt, StudentKind::Tree] {
            for lr_head in [false, true] {
                for teacher in TeacherKind::ALL {
                    out.push(MethodSpec::Mimic {
                        student,
                        teacher,
                        lr_head,
                    });
                }
            }
        }
        out
    }
}

impl core::fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.id())
    }
}

impl core::str::FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Unknown {
            what: "method",
            name: s.into(),
        };
        let upper = s.trim().to_ascii_uppercase();
        let baseline = match upper.as_str() {
            "SVM" => Some(BaselineKind::Svm),
            "LR" => Some(BaselineKind::Lr),
            "DT" => Some(BaselineKind::Dt),
            "GBT" => Some(BaselineKind::Gbt),
            _ => None,
        };
        if let Some(b) = baseline {
            return Ok(MethodSpec::Baseline(b));
        }
        let (student, rest) = if let Some(rest) = upper.strip_prefix("GBTMIMIC-") {
            (Some(StudentKind::Gbt), rest)
        } else if let Some(rest) = upper.strip_prefix("DTMIMIC-") {
            (Some(StudentKind::Tree), rest)
        } else {
            (None, upper.as_str())
        };
        let (lr_head, rest) = match rest.strip_prefix("LR-") {
            Some(r) => (true, r),
            None => (false, rest),
        };
        let teacher = match rest {
            "DNN" => TeacherKind::Dnn,
            "SDA" => TeacherKind::Sda,
            "LSTM" => TeacherKind::Lstm,
            _ => return Err(unknown()),
        };
        Ok(match student {
            Some(student) => MethodSpec::Mimic {
                student,
                teacher,
                lr_head,
            },
            None => MethodSpec::Neural { teacher, lr_head },
        })
    }
}

impl Serialize for MethodSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for MethodSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn brute_force(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn hand_case() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
    }

    #[test]
    fn separation_and_ties() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(auc(&[0.3; 7], &[0, 1, 0, 1, 1, 0, 0]).unwrap(), 0.5);
    }

    #[test]
    fn errors() {
        assert_eq!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass));
        assert!(matches!(auc(&[0.1, 0.2], &[0, 2]), Err(Error::InvalidLabel(_))));
        assert!(matches!(auc(&[0.1], &[0, 1]), Err(Error::Shape(_))));
    }

    #[test]
    fn matches_pair_counting_on_random_instances() {
        let mut rng = seeded(2024);
        for _ in 0..100 {
            let n = rng.random_range(2..=200);
            // coarse scores force many ties
            let levels = rng.random_range(1..=20);
            let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / 7.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
            labels[0] = 0;
            labels[1] = 1;
            assert!((auc(&scores, &labels).unwrap() - brute_force(&scores, &labels)).abs() <= 1e-12);
        }
    }

    #[test]
    fn method_ids_round_trip() {
        let all = MethodSpec::all();
        assert_eq!(all.len(), 4 + 6 + 12);
        for m in &all {
            assert_eq!(m.id().parse::<MethodSpec>().unwrap(), *m);
        }
        assert_eq!("gbtmimic-lr-sda".parse::<MethodSpec>().unwrap().id(), "GBTmimic-LR-SDA");
        assert_eq!("DTmimic-LSTM".parse::<MethodSpec>().unwrap().group(), MethodGroup::Mimic);
        assert!(matches!("GBTmimic-GBT".parse::<MethodSpec>(), Err(Error::Unknown { what: "method", .. })));
        assert_eq!(
            "GBTmimic-LR-DNN".parse::<MethodSpec>().unwrap().soft_target_source().unwrap().id(),
            "LR-DNN"
        );
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force(
            raw in prop::collection::vec((0u8..12, any::<bool>()), 2..120)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s) * 0.1).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, l)| u8::from(*l)).collect();
            match auc(&scores, &labels) {
                Ok(a) => prop_assert!((a - brute_force(&scores, &labels)).abs() <= 1e-12),
                Err(e) => prop_assert_eq!(e, Error::SingleClass),
            }
        }

        #[test]
        fn invariant_under_monotone_transforms(
            raw in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..100)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, l)| u8::from(*l)).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let base = auc(&scores, &labels).unwrap();
            let transformed: Vec<f64> = scores.iter().map(|s| libm::exp(*s) * 3.0 + 1.0).collect();
            prop_assert_eq!(auc(&transformed, &labels).unwrap(), base);
            let cubed: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
            prop_assert_eq!(auc(&cubed, &labels).unwrap(), base);
        }
    }
}
