//! Static + temporal patient records, imputation, flattened design matrices
//! and a synthetic generator shaped like a ventilation cohort.

mod flatten;
mod impute;
mod synth;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result};

pub use flatten::{flatten, sequence_view, ColumnSource, DesignMatrix, FeatureView};
pub use impute::impute_missing;
pub use synth::{informative_temporal_names, synth_generate, SynthConfig, TemporalRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Binary,
    Continuous,
}

/// Prediction task. `Mor` is 60-day mortality, `Vfd` is ventilator-free days ≤ 14.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "MOR")]
    Mor,
    #[serde(rename = "VFD")]
    Vfd,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Mor, Task::Vfd];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Mor => "MOR",
            Task::Vfd => "VFD",
        }
    }
}

impl core::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MOR" => Ok(Task::Mor),
            "VFD" => Ok(Task::Vfd),
            _ => Err(Error::Unknown {
                what: "task",
                name: s.into(),
            }),
        }
    }
}

impl core::fmt::Display for Task {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// N × T × P tensor stored sample-major, then time step, then variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalTensor {
    pub n_samples: usize,
    pub t_steps: usize,
    pub n_vars: usize,
    pub values: Vec<f64>,
}

impl TemporalTensor {
    pub fn zeros(n_samples: usize, t_steps: usize, n_vars: usize) -> Self {
        TemporalTensor {
            n_samples,
            t_steps,
            n_vars,
            values: alloc::vec![0.0; n_samples * t_steps * n_vars],
        }
    }

    #[inline]
    pub fn index(&self, sample: usize, step: usize, var: usize) -> usize {
        (sample * self.t_steps + step) * self.n_vars + var
    }

    #[inline]
    pub fn get(&self, sample: usize, step: usize, var: usize) -> f64 {
        self.values[self.index(sample, step, var)]
    }

    /// The T·P values of one sample, time-major.
    #[inline]
    pub fn sample(&self, sample: usize) -> &[f64] {
        let len = self.t_steps * self.n_vars;
        &self.values[sample * len..(sample + 1) * len]
    }

    #[inline]
    pub fn step(&self, sample: usize, step: usize) -> &[f64] {
        let start = self.index(sample, step, 0);
        &self.values[start..start + self.n_vars]
    }

    pub fn select_samples(&self, indices: &[usize]) -> TemporalTensor {
        let mut values = Vec::with_capacity(indices.len() * self.t_steps * self.n_vars);
        for &i in indices {
            values.extend_from_slice(self.sample(i));
        }
        TemporalTensor {
            n_samples: indices.len(),
            t_steps: self.t_steps,
            n_vars: self.n_vars,
            values,
        }
    }
}

/// One cohort: static variables, daily temporal variables, missingness and
/// the binary label channels.
///
/// Unobserved cells hold `NaN` until [`impute_missing`] fills them; the masks
/// keep recording which cells were originally missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub patient_ids: Vec<String>,
    pub static_names: Vec<String>,
    pub temporal_names: Vec<String>,
    pub static_kinds: Vec<VarKind>,
    pub temporal_kinds: Vec<VarKind>,
    /// N × Q
    pub static_values: Matrix,
    /// N × Q, row-major like `static_values`.
    pub static_missing: Vec<bool>,
    pub temporal: TemporalTensor,
    /// Aligned with `temporal.values`.
    pub temporal_missing: Vec<bool>,
    pub labels: BTreeMap<Task, Vec<u8>>,
}

impl Dataset {
    /// Assembles a dataset, marking `NaN` cells as missing and inferring
    /// binary/continuous tags from the observed value sets.
    pub fn from_parts(
        patient_ids: Vec<String>,
        static_names: Vec<String>,
        temporal_names: Vec<String>,
        static_values: Matrix,
        temporal: TemporalTensor,
        labels: BTreeMap<Task, Vec<u8>>,
    ) -> Result<Self> {
        let static_missing = static_values.data.iter().map(|v| v.is_nan()).collect();
        let temporal_missing = temporal.values.iter().map(|v| v.is_nan()).collect();
        let mut ds = Dataset {
            patient_ids,
            static_names,
            temporal_names,
            static_kinds: Vec::new(),
            temporal_kinds: Vec::new(),
            static_values,
            static_missing,
            temporal,
            temporal_missing,
            labels,
        };
        ds.static_kinds = (0..ds.q_static())
            .map(|j| infer_kind(ds.static_observed(j)))
            .collect();
        ds.temporal_kinds = (0..ds.p_temporal())
            .map(|k| infer_kind(ds.temporal_observed(k)))
            .collect();
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_samples(&self) -> usize {
        self.static_values.rows
    }

    pub fn q_static(&self) -> usize {
        self.static_values.cols
    }

    pub fn p_temporal(&self) -> usize {
        self.temporal.n_vars
    }

    pub fn t_steps(&self) -> usize {
        self.temporal.t_steps
    }

    pub fn label(&self, task: Task) -> Result<&[u8]> {
        self.labels
            .get(&task)
            .map(Vec::as_slice)
            .ok_or(Error::Unknown {
                what: "label channel",
                name: task.as_str().into(),
            })
    }

    /// Labels of `task` as `f64` targets.
    pub fn label_f64(&self, task: Task) -> Result<Vec<f64>> {
        Ok(self.label(task)?.iter().map(|&v| f64::from(v)).collect())
    }

    /// Observed values of static variable `j`.
    pub fn static_observed(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        let q = self.q_static();
        (0..self.n_samples()).filter_map(move |i| {
            (!self.static_missing[i * q + j]).then(|| self.static_values.get(i, j))
        })
    }

    /// Observed values of temporal variable `k`, pooled over samples and days.
    pub fn temporal_observed(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        let t = &self.temporal;
        (0..t.n_samples).flat_map(move |i| {
            (0..t.t_steps).filter_map(move |d| {
                let idx = t.index(i, d, k);
                (!self.temporal_missing[idx]).then(|| t.values[idx])
            })
        })
    }

    /// True when no cell holds an unfilled missing value.
    pub fn is_imputed(&self) -> bool {
        !self.static_values.data.iter().any(|v| v.is_nan())
            && !self.temporal.values.iter().any(|v| v.is_nan())
    }

    /// Fraction of all static and temporal cells that were missing.
    pub fn missing_fraction(&self) -> f64 {
        let total = self.static_missing.len() + self.temporal_missing.len();
        if total == 0 {
            return 0.0;
        }
        let missing = self
            .static_missing
            .iter()
            .chain(&self.temporal_missing)
            .filter(|&&m| m)
            .count();
        missing as f64 / total as f64
    }

    pub fn select_samples(&self, indices: &[usize]) -> Dataset {
        let q = self.q_static();
        Dataset {
            patient_ids: indices.iter().map(|&i| self.patient_ids[i].clone()).collect(),
            static_names: self.static_names.clone(),
            temporal_names: self.temporal_names.clone(),
            static_kinds: self.static_kinds.clone(),
            temporal_kinds: self.temporal_kinds.clone(),
            static_values: self.static_values.select_rows(indices),
            static_missing: indices
                .iter()
                .flat_map(|&i| self.static_missing[i * q..(i + 1) * q].iter().copied())
                .collect(),
            temporal: self.temporal.select_samples(indices),
            temporal_missing: {
                let len = self.t_steps() * self.p_temporal();
                indices
                    .iter()
                    .flat_map(|&i| self.temporal_missing[i * len..(i + 1) * len].iter().copied())
                    .collect()
            },
            labels: self
                .labels
                .iter()
                .map(|(&task, y)| (task, indices.iter().map(|&i| y[i]).collect()))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_samples();
        if self.patient_ids.len() != n {
            return Err(Error::shape(format!(
                "{} patient ids for {n} samples",
                self.patient_ids.len()
            )));
        }
        if self.temporal.n_samples != n {
            return Err(Error::shape(format!(
                "temporal tensor has {} samples, static matrix has {n}",
                self.temporal.n_samples
            )));
        }
        if self.temporal.values.len() != n * self.t_steps() * self.p_temporal() {
            return Err(Error::shape("temporal tensor length does not match N×T×P"));
        }
        if self.static_names.len() != self.q_static() || self.temporal_names.len() != self.p_temporal()
        {
            return Err(Error::shape("feature name count does not match variables"));
        }
        if self.static_missing.len() != self.static_values.data.len()
            || self.temporal_missing.len() != self.temporal.values.len()
        {
            return Err(Error::shape("missing mask does not align with values"));
        }
        for y in self.labels.values() {
            if y.len() != n {
                return Err(Error::shape(format!("label vector of length {} for {n} samples", y.len())));
            }
            if let Some(&bad) = y.iter().find(|&&v| v > 1) {
                return Err(Error::InvalidLabel(f64::from(bad)));
            }
        }
        for (j, kind) in self.static_kinds.iter().enumerate() {
            if *kind == VarKind::Binary && self.static_observed(j).any(|v| v != 0.0 && v != 1.0) {
                return Err(Error::config("static_kinds", format!("`{}` tagged binary", self.static_names[j])));
            }
        }
        Ok(())
    }
}

/// Exactly {0, 1} observed ⇒ binary, anything else ⇒ continuous.
fn infer_kind(observed: impl Iterator<Item = f64>) -> VarKind {
    let (mut zero, mut one) = (false, false);
    for v in observed {
        if v == 0.0 {
            zero = true;
        } else if v == 1.0 {
            one = true;
        } else {
            return VarKind::Continuous;
        }
    }
    if zero && one {
        VarKind::Binary
    } else {
        VarKind::Continuous
    }
}
