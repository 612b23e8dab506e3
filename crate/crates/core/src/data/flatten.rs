use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Dataset, TemporalTensor};
use crate::linalg::Matrix;
use crate::{Error, Result};

/// Which variables enter the flattened design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureView {
    /// Static variables, then every temporal variable on every day.
    All,
    /// Temporal variables on every day.
    TemporalOnly,
    /// Static variables plus the day-0 value of each temporal variable.
    StaticPlusDay0,
}

impl FeatureView {
    pub const ALL: [FeatureView; 3] = [
        FeatureView::All,
        FeatureView::TemporalOnly,
        FeatureView::StaticPlusDay0,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureView::All => "all",
            FeatureView::TemporalOnly => "temporal_only",
            FeatureView::StaticPlusDay0 => "static_plus_day0",
        }
    }
}

impl core::str::FromStr for FeatureView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureView::All),
            "temporal_only" | "temporal" => Ok(FeatureView::TemporalOnly),
            "static_plus_day0" => Ok(FeatureView::StaticPlusDay0),
            _ => Err(Error::Unknown {
                what: "feature view",
                name: s.into(),
            }),
        }
    }
}

impl core::fmt::Display for FeatureView {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a design-matrix column comes from in the original dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnSource {
    Static { var: usize },
    Temporal { var: usize, day: usize },
}

/// Flattened N × D feature matrix. Columns constant over all samples are
/// removed; `dropped_columns` holds their positions in the view's full
/// column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub values: Matrix,
    pub column_names: Vec<String>,
    pub columns: Vec<ColumnSource>,
    pub dropped_columns: Vec<usize>,
    pub dropped_names: Vec<String>,
}

impl DesignMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.rows
    }

    pub fn d(&self) -> usize {
        self.values.cols
    }

    pub fn select_rows(&self, indices: &[usize]) -> DesignMatrix {
        DesignMatrix {
            values: self.values.select_rows(indices),
            column_names: self.column_names.clone(),
            columns: self.columns.clone(),
            dropped_columns: self.dropped_columns.clone(),
            dropped_names: self.dropped_names.clone(),
        }
    }
}

fn view_columns(ds: &Dataset, view: FeatureView) -> Vec<ColumnSource> {
    let statics = (0..ds.q_static()).map(|var| ColumnSource::Static { var });
    let temporal = |days: usize| {
        (0..ds.p_temporal())
            .flat_map(move |var| (0..days).map(move |day| ColumnSource::Temporal { var, day }))
    };
    match view {
        FeatureView::All => statics.chain(temporal(ds.t_steps())).collect(),
        FeatureView::TemporalOnly => temporal(ds.t_steps()).collect(),
        FeatureView::StaticPlusDay0 => statics.chain(temporal(ds.t_steps().min(1))).collect(),
    }
}

pub(crate) fn column_name(ds: &Dataset, source: ColumnSource) -> String {
    match source {
        ColumnSource::Static { var } => format!("s_{}", ds.static_names[var]),
        ColumnSource::Temporal { var, day } => format!("t_{}_d{day}", ds.temporal_names[var]),
    }
}

fn value_at(ds: &Dataset, sample: usize, source: ColumnSource) -> f64 {
    match source {
        ColumnSource::Static { var } => ds.static_values.get(sample, var),
        ColumnSource::Temporal { var, day } => ds.temporal.get(sample, day, var),
    }
}

/// Daily values a sequence model may read under `view`: every day, or only
/// day 0 for [`FeatureView::StaticPlusDay0`].
pub fn sequence_view(ds: &Dataset, view: FeatureView) -> Result<TemporalTensor> {
    if !ds.is_imputed() {
        return Err(Error::NotImputed);
    }
    if ds.n_samples() == 0 {
        return Err(Error::EmptyData);
    }
    match view {
        FeatureView::All | FeatureView::TemporalOnly => Ok(ds.temporal.clone()),
        FeatureView::StaticPlusDay0 => {
            let t = &ds.temporal;
            let mut out = TemporalTensor::zeros(t.n_samples, 1, t.n_vars);
            for i in 0..t.n_samples {
                out.values[i * t.n_vars..(i + 1) * t.n_vars].copy_from_slice(t.step(i, 0));
            }
            Ok(out)
        }
    }
}

/// Flattens an imputed dataset into a design matrix for `view`.
///
/// Static columns come first, then temporal columns variable-major
/// (`v1d0, v1d1, …, v2d0, …`). Columns whose value is exactly equal across
/// all samples are dropped and recorded.
pub fn flatten(ds: &Dataset, view: FeatureView) -> Result<DesignMatrix> {
    if !ds.is_imputed() {
        return Err(Error::NotImputed);
    }
    let n = ds.n_samples();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let sources = view_columns(ds, view);
    let mut kept = Vec::new();
    let mut dropped_columns = Vec::new();
    let mut dropped_names = Vec::new();
    for (pos, &src) in sources.iter().enumerate() {
        let first = value_at(ds, 0, src);
        if (1..n).all(|i| value_at(ds, i, src) == first) {
            dropped_columns.push(pos);
            dropped_names.push(column_name(ds, src));
        } else {
            kept.push(src);
        }
    }
    let mut values = Matrix::zeros(n, kept.len());
    for i in 0..n {
        for (c, &src) in values.row_mut(i).iter_mut().zip(&kept) {
            *c = value_at(ds, i, src);
        }
    }
    Ok(DesignMatrix {
        values,
        column_names: kept.iter().map(|&s| column_name(ds, s)).collect(),
        columns: kept,
        dropped_columns,
        dropped_names,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny;
    use super::*;
    use alloc::vec;

    #[test]
    fn column_order_is_static_then_variable_major() {
        // N=2, Q=2, T=2, P=2
        let ds = tiny(
            &[[0.0, 1.0], [1.0, 2.0]],
            vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0],
            2,
            2,
        );
        let dm = flatten(&ds, FeatureView::All).unwrap();
        assert_eq!(dm.column_names, ["s_a", "s_b", "t_v0_d0", "t_v0_d1", "t_v1_d0", "t_v1_d1"]);
        assert_eq!(dm.values.row(0), &[0.0, 1.0, 1.0, 2.0, 10.0, 20.0]);
        assert_eq!(dm.values.row(1), &[1.0, 2.0, 3.0, 4.0, 30.0, 40.0]);
    }

    #[test]
    fn constant_columns_are_dropped_and_recorded() {
        let ds = tiny(
            &[[0.0, 5.0], [1.0, 5.0]],
            vec![0.0, 1.0, 0.0, 2.0],
            2,
            1,
        );
        let dm = flatten(&ds, FeatureView::All).unwrap();
        assert_eq!(dm.column_names, ["s_a", "t_v0_d1"]);
        assert_eq!(dm.dropped_columns, [1, 2]);
        assert_eq!(dm.dropped_names, ["s_b", "t_v0_d0"]);

        let day0 = flatten(&ds, FeatureView::StaticPlusDay0).unwrap();
        assert_eq!(day0.column_names, ["s_a"]);
        let temporal = flatten(&ds, FeatureView::TemporalOnly).unwrap();
        assert_eq!(temporal.column_names, ["t_v0_d1"]);
        assert_eq!(temporal.dropped_columns, [0]);
    }

    #[test]
    fn unimputed_dataset_is_rejected() {
        let ds = tiny(&[[0.0, f64::NAN], [1.0, 2.0]], vec![0.0, 1.0], 1, 1);
        assert_eq!(flatten(&ds, FeatureView::All), Err(Error::NotImputed));
    }

    #[test]
    fn sequence_view_keeps_day_zero_only_for_the_static_view() {
        let ds = tiny(
            &[[0.0, 1.0], [1.0, 2.0]],
            vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0],
            2,
            2,
        );
        assert_eq!(sequence_view(&ds, FeatureView::All).unwrap(), ds.temporal);
        let day0 = sequence_view(&ds, FeatureView::StaticPlusDay0).unwrap();
        assert_eq!((day0.t_steps, day0.n_vars), (1, 2));
        assert_eq!(day0.values, [1.0, 10.0, 3.0, 30.0]);
    }
}
