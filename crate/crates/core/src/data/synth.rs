use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Task, TemporalTensor};
use crate::linalg::{sigmoid, Matrix};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

/// Parameters of the synthetic cohort generator. Defaults follow the shape
/// of a pediatric ventilation cohort: 27 static variables, 21 daily
/// variables over 4 days, 13.43% missing cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub q_static: usize,
    pub p_temporal: usize,
    pub t_steps: usize,
    pub missing_rate: f64,
    pub n_informative_temporal: usize,
    pub n_informative_static: usize,
    pub label_noise: f64,
    /// Temporal variables (taken from the end of the list) that are exactly 0
    /// on day 0 and accumulate afterwards. Their day-0 cells are never missing.
    pub n_zero_day0: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 400,
            q_static: 27,
            p_temporal: 21,
            t_steps: 4,
            missing_rate: 0.1343,
            n_informative_temporal: 3,
            n_informative_static: 2,
            label_noise: 0.05,
            n_zero_day0: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::config("n_samples", "must be at least 1"));
        }
        if self.t_steps == 0 {
            return Err(Error::config("t_steps", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::config("missing_rate", "must lie in [0, 1)"));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(Error::config("label_noise", "must lie in [0, 0.5)"));
        }
        if self.n_informative_temporal > self.p_temporal {
            return Err(Error::config("n_informative_temporal", "exceeds p_temporal"));
        }
        if self.n_informative_static > self.q_static {
            return Err(Error::config("n_informative_static", "exceeds q_static"));
        }
        if self.n_informative_temporal + self.n_zero_day0 > self.p_temporal {
            return Err(Error::config(
                "n_zero_day0",
                "informative and zero-start variables exceed p_temporal",
            ));
        }
        Ok(())
    }

    /// Static variable `j` is binary on even indices.
    pub fn static_is_binary(j: usize) -> bool {
        j % 2 == 0
    }

    /// Roles of temporal variable `k`.
    pub fn temporal_role(&self, k: usize) -> TemporalRole {
        if k < self.n_informative_temporal {
            TemporalRole::Informative
        } else if k >= self.p_temporal - self.n_zero_day0 {
            TemporalRole::ZeroStart
        } else if k % 5 == 4 {
            TemporalRole::BinaryNoise
        } else {
            TemporalRole::Noise
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalRole {
    /// Day trend follows one of two regimes tied to the outcome.
    Informative,
    Noise,
    /// Thresholded noisy trend (a discretized score).
    BinaryNoise,
    /// 0 on day 0, nonnegative increments afterwards.
    ZeroStart,
}

const SLOPE_REGIME: f64 = 0.8;
const SLOPE_JITTER: f64 = 0.3;
const NOISE_SLOPE_SD: f64 = 0.4;
const DAY_NOISE_SD: f64 = 0.3;
const TEMPORAL_WEIGHT: f64 = 1.5;
const STATIC_WEIGHT: f64 = 0.5;
const VFD_CORRELATION: f64 = 0.7;
const VFD_THRESHOLD: f64 = 0.2;

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates a synthetic cohort. The outcome is driven mainly by the day
/// trends of the informative temporal variables, plus a weaker contribution
/// from the informative static variables.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let (n, q, p, t) = (cfg.n_samples, cfg.q_static, cfg.p_temporal, cfg.t_steps);

    let static_params: Vec<(f64, f64)> = (0..q)
        .map(|j| {
            if SynthConfig::static_is_binary(j) {
                (rng.random_range(0.2..0.8), 0.0)
            } else {
                (rng.random_range(-1.0..1.0), rng.random_range(0.5..1.5))
            }
        })
        .collect();

    let mut static_values = Matrix::zeros(n, q);
    let mut temporal = TemporalTensor::zeros(n, t, p);
    let mut risk = Vec::with_capacity(n);

    for i in 0..n {
        let mut r = 0.0;
        for (j, &(a, b)) in static_params.iter().enumerate() {
            let (value, score) = if SynthConfig::static_is_binary(j) {
                let x = if rng.random_bool(a) { 1.0 } else { 0.0 };
                (x, (x - a) / libm::sqrt(a * (1.0 - a)))
            } else {
                let z = normal(&mut rng);
                (a + b * z, z)
            };
            static_values.set(i, j, value);
            if j < cfg.n_informative_static {
                r += STATIC_WEIGHT * score;
            }
        }
        for k in 0..p {
            let role = cfg.temporal_role(k);
            let base = normal(&mut rng);
            let slope = match role {
                TemporalRole::Informative => {
                    let regime = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    SLOPE_REGIME * regime + SLOPE_JITTER * normal(&mut rng)
                }
                _ => NOISE_SLOPE_SD * normal(&mut rng),
            };
            if role == TemporalRole::Informative {
                r += TEMPORAL_WEIGHT * slope;
            }
            let mut level = 0.0;
            for d in 0..t {
                let noisy = base + slope * d as f64 + DAY_NOISE_SD * normal(&mut rng);
                let v = match role {
                    TemporalRole::Informative | TemporalRole::Noise => noisy,
                    TemporalRole::BinaryNoise => f64::from(u8::from(noisy > 0.0)),
                    TemporalRole::ZeroStart => {
                        if d > 0 {
                            level += libm::fabs(0.5 + 0.5 * normal(&mut rng));
                        }
                        level
                    }
                };
                let idx = temporal.index(i, d, k);
                temporal.values[idx] = v;
            }
        }
        risk.push(r);
    }

    let risk_sd = crate::linalg::sample_std(&risk).max(1e-12);
    let mut mor = Vec::with_capacity(n);
    let mut vfd = Vec::with_capacity(n);
    for &r in &risk {
        let y = rng.random_bool(sigmoid(r));
        let latent = VFD_CORRELATION * r / risk_sd
            + libm::sqrt(1.0 - VFD_CORRELATION * VFD_CORRELATION) * normal(&mut rng);
        let v = latent > VFD_THRESHOLD;
        mor.push(u8::from(y ^ rng.random_bool(cfg.label_noise)));
        vfd.push(u8::from(v ^ rng.random_bool(cfg.label_noise)));
    }

    // Plant missing cells; structural zeros on day 0 stay observed, so the
    // per-cell rate is raised to keep the overall fraction at `missing_rate`.
    let total = n * (q + t * p);
    let eligible = total - n * cfg.n_zero_day0.min(p);
    let cell_rate = if eligible == 0 {
        0.0
    } else {
        (cfg.missing_rate * total as f64 / eligible as f64).min(0.999)
    };
    if cell_rate > 0.0 {
        for v in static_values.data.iter_mut() {
            if rng.random_bool(cell_rate) {
                *v = f64::NAN;
            }
        }
        for i in 0..n {
            for d in 0..t {
                for k in 0..p {
                    if d == 0 && cfg.temporal_role(k) == TemporalRole::ZeroStart {
                        continue;
                    }
                    if rng.random_bool(cell_rate) {
                        let idx = temporal.index(i, d, k);
                        temporal.values[idx] = f64::NAN;
                    }
                }
            }
        }
    }

    let mut labels = BTreeMap::new();
    labels.insert(Task::Mor, mor);
    labels.insert(Task::Vfd, vfd);
    Dataset::from_parts(
        (0..n).map(|i| format!("P{:05}", i + 1)).collect(),
        (1..=q).map(|j| format!("S{j}")).collect(),
        (1..=p).map(|k| format!("V{k}")).collect(),
        static_values,
        temporal,
        labels,
    )
    .map(|mut ds| {
        // Binary tags come from the generator, not from what survived masking.
        for (j, kind) in ds.static_kinds.iter_mut().enumerate() {
            if SynthConfig::static_is_binary(j) {
                *kind = super::VarKind::Binary;
            }
        }
        for (k, kind) in ds.temporal_kinds.iter_mut().enumerate() {
            if cfg.temporal_role(k) == TemporalRole::BinaryNoise {
                *kind = super::VarKind::Binary;
            }
        }
        ds
    })
}

/// Names of the temporal variables that carry planted signal.
pub fn informative_temporal_names(cfg: &SynthConfig) -> Vec<String> {
    (1..=cfg.n_informative_temporal).map(|k| format!("V{k}")).collect()
}

#[cfg(test)]
mod tests {
    use super::super::{flatten, impute_missing, FeatureView, VarKind};
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_samples: 60,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = synth_generate(&small(7)).unwrap();
        let b = synth_generate(&small(7)).unwrap();
        // NaN != NaN, so compare bit patterns
        let bits = |ds: &Dataset| -> Vec<u64> {
            ds.static_values
                .data
                .iter()
                .chain(&ds.temporal.values)
                .map(|v| v.to_bits())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.static_missing, b.static_missing);
        assert_ne!(bits(&a), bits(&synth_generate(&small(8)).unwrap()));
    }

    #[test]
    fn zero_missing_rate_leaves_mask_empty() {
        let ds = synth_generate(&SynthConfig {
            missing_rate: 0.0,
            ..small(1)
        })
        .unwrap();
        assert!(ds.static_missing.iter().chain(&ds.temporal_missing).all(|m| !m));
        assert!(ds.is_imputed());
    }

    #[test]
    fn default_missing_fraction_matches_target() {
        let ds = synth_generate(&SynthConfig::default()).unwrap();
        assert!((ds.missing_fraction() - 0.1343).abs() < 0.01, "{}", ds.missing_fraction());
    }

    #[test]
    fn default_schema_flattens_to_109_columns() {
        let ds = impute_missing(&synth_generate(&SynthConfig::default()).unwrap()).unwrap();
        let dm = flatten(&ds, FeatureView::All).unwrap();
        assert_eq!(dm.d(), 109);
        assert_eq!(dm.dropped_names, ["t_V20_d0", "t_V21_d0"]);
    }

    #[test]
    fn binary_tags_and_values_agree() {
        let ds = synth_generate(&small(3)).unwrap();
        assert_eq!(ds.static_kinds[0], VarKind::Binary);
        assert_eq!(ds.static_kinds[1], VarKind::Continuous);
        assert_eq!(ds.temporal_kinds[4], VarKind::Binary);
        ds.validate().unwrap();
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let bad = SynthConfig {
            n_informative_temporal: 30,
            ..SynthConfig::default()
        };
        assert!(matches!(
            synth_generate(&bad),
            Err(Error::InvalidConfig { field: "n_informative_temporal", .. })
        ));
        let bad = SynthConfig {
            label_noise: 0.5,
            ..SynthConfig::default()
        };
        assert!(matches!(
            synth_generate(&bad),
            Err(Error::InvalidConfig { field: "label_noise", .. })
        ));
    }
}
