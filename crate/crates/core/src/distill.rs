//! Mimic learning: distil a trained teacher network into tree students
//! through its soft predictions.
//!
//! Pipeline 1 feeds the teacher's top hidden representation into logistic
//! regression and regresses the student on those scores. Pipeline 2 regresses
//! the student directly on the teacher's own output. Students always read the
//! raw design matrix.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::TemporalTensor;
use crate::linalg::{mean, Matrix};
use crate::linear::{train_logreg, LinearConfig, LinearModel};
use crate::neural::{
    train_lstm_logged, train_mlp_logged, train_sda_logged, MlpObjective, NeuralInput, NeuralModel, TrainConfig,
    TrainLog,
};
use crate::trees::{cart_fit, gbt_fit, TreeConfig, TreeKind, TreeModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    Dnn,
    Sda,
    Lstm,
}

impl TeacherKind {
    pub const ALL: [TeacherKind; 3] = [TeacherKind::Dnn, TeacherKind::Sda, TeacherKind::Lstm];

    pub fn as_str(self) -> &'static str {
        match self {
            TeacherKind::Dnn => "DNN",
            TeacherKind::Sda => "SDA",
            TeacherKind::Lstm => "LSTM",
        }
    }
}

impl core::str::FromStr for TeacherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dnn" | "mlp" => Ok(TeacherKind::Dnn),
            "sda" => Ok(TeacherKind::Sda),
            "lstm" => Ok(TeacherKind::Lstm),
            _ => Err(Error::Unknown {
                what: "teacher",
                name: s.into(),
            }),
        }
    }
}

impl core::fmt::Display for TeacherKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which network to train and whether logistic regression sits on top of
/// its features (the `LR-*` methods and Pipeline 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub kind: TeacherKind,
    pub with_lr_head: bool,
    pub train_config: TrainConfig,
    #[serde(default)]
    pub lr_config: LinearConfig,
}

impl TeacherSpec {
    /// Default training settings: SGD for the feedforward teachers, RMSprop for the LSTM.
    pub fn new(kind: TeacherKind, with_lr_head: bool) -> Self {
        let train_config = match kind {
            TeacherKind::Lstm => TrainConfig::lstm(),
            _ => TrainConfig::default(),
        };
        TeacherSpec {
            kind,
            with_lr_head,
            train_config,
            lr_config: LinearConfig::logreg(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train_config.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// hidden features → logistic regression → student
    P1,
    /// teacher soft predictions → student
    P2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentKind {
    Gbt,
    /// One regression tree grown until its leaves are pure.
    Tree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentSpec {
    pub kind: StudentKind,
    pub config: TreeConfig,
}

impl StudentSpec {
    pub fn gbt() -> Self {
        StudentSpec {
            kind: StudentKind::Gbt,
            config: TreeConfig::gbt(),
        }
    }

    pub fn single_tree() -> Self {
        StudentSpec {
            kind: StudentKind::Tree,
            config: TreeConfig::single_tree(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftTargetStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl SoftTargetStats {
    pub fn of(values: &[f64]) -> Self {
        SoftTargetStats {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: mean(values),
        }
    }
}

/// A trained student together with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicModel {
    pub student: TreeModel,
    pub student_spec: StudentSpec,
    pub teacher: TeacherSpec,
    pub pipeline: Pipeline,
    pub soft_target_stats: SoftTargetStats,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

impl MimicModel {
    /// Raw regression outputs.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.student.predict(x)
    }

    /// Outputs clipped to [0, 1] for reporting.
    pub fn predict_clamped(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self.predict(x)?.into_iter().map(|p| p.clamp(0.0, 1.0)).collect())
    }
}

/// A trained network together with the input it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedTeacher {
    pub model: NeuralModel,
    pub log: TrainLog,
}

impl TrainedTeacher {
    /// The LSTM reads the daily tensor, the other teachers the design matrix.
    pub fn input<'a>(&self, x: &'a Matrix, x_ts: &'a TemporalTensor) -> NeuralInput<'a> {
        match self.model {
            NeuralModel::Lstm(_) => NeuralInput::Sequence(x_ts),
            _ => NeuralInput::Flat(x),
        }
    }

    pub fn predict_soft(&self, x: &Matrix, x_ts: &TemporalTensor) -> Result<Vec<f64>> {
        self.model.predict_soft(self.input(x, x_ts))
    }

    pub fn extract_features(&self, x: &Matrix, x_ts: &TemporalTensor) -> Result<Matrix> {
        self.model.extract_features(self.input(x, x_ts))
    }
}

pub fn train_teacher(spec: &TeacherSpec, x: &Matrix, x_ts: &TemporalTensor, y: &[f64]) -> Result<TrainedTeacher> {
    if x.rows != x_ts.n_samples {
        return Err(Error::shape(format!(
            "design matrix has {} rows, temporal tensor {}",
            x.rows, x_ts.n_samples
        )));
    }
    let cfg = &spec.train_config;
    let (model, log) = match spec.kind {
        TeacherKind::Dnn => {
            let (m, log) = train_mlp_logged(x, y, cfg, MlpObjective::Predict)?;
            (NeuralModel::Mlp(m), log)
        }
        TeacherKind::Sda => {
            let (m, log) = train_sda_logged(x, y, cfg)?;
            (NeuralModel::Sda(m), log)
        }
        TeacherKind::Lstm => {
            let (m, log) = train_lstm_logged(x_ts, y, cfg)?;
            (NeuralModel::Lstm(m), log)
        }
    };
    Ok(TrainedTeacher { model, log })
}

/// Logistic regression on the teacher's features, fitted and scored on the same rows.
pub fn soft_targets_p1(
    teacher: &TrainedTeacher,
    x: &Matrix,
    x_ts: &TemporalTensor,
    y: &[f64],
    lr_config: &LinearConfig,
) -> Result<(LinearModel, Vec<f64>)> {
    let features = teacher.extract_features(x, x_ts)?;
    let (lr, _) = train_logreg(&features, y, lr_config)?;
    let scores = lr.predict_scores(&features)?;
    Ok((lr, scores))
}

pub fn soft_targets_p2(teacher: &TrainedTeacher, x: &Matrix, x_ts: &TemporalTensor) -> Result<Vec<f64>> {
    teacher.predict_soft(x, x_ts)
}

/// Squared-error regression of the raw inputs onto `soft`. No labels are involved.
pub fn fit_student(x: &Matrix, soft: &[f64], student: &StudentSpec) -> Result<TreeModel> {
    match student.kind {
        StudentKind::Gbt => gbt_fit(x, soft, &student.config).map(TreeModel::Gbt),
        StudentKind::Tree => cart_fit(x, soft, &student.config, TreeKind::RegressorMse).map(TreeModel::Tree),
    }
}

/// Everything a distillation run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillRun {
    pub mimic: MimicModel,
    pub teacher: TrainedTeacher,
    pub lr_head: Option<LinearModel>,
    pub soft_targets: Vec<f64>,
}

/// Builds the mimic model from an already trained teacher.
pub fn distill_from_teacher(
    teacher: TrainedTeacher,
    spec: &TeacherSpec,
    x: &Matrix,
    x_ts: &TemporalTensor,
    y: &[f64],
    student: &StudentSpec,
    feature_names: &[String],
) -> Result<DistillRun> {
    let (pipeline, lr_head, soft) = if spec.with_lr_head {
        let (lr, soft) = soft_targets_p1(&teacher, x, x_ts, y, &spec.lr_config)?;
        (Pipeline::P1, Some(lr), soft)
    } else {
        (Pipeline::P2, None, soft_targets_p2(&teacher, x, x_ts)?)
    };
    let model = fit_student(x, &soft, student)?.with_feature_names(feature_names.to_vec());
    Ok(DistillRun {
        mimic: MimicModel {
            student: model,
            student_spec: student.clone(),
            teacher: spec.clone(),
            pipeline,
            soft_target_stats: SoftTargetStats::of(&soft),
            feature_names: feature_names.to_vec(),
        },
        teacher,
        lr_head,
        soft_targets: soft,
    })
}

/// Teacher → features → logistic regression → `y_c` → student on `x`.
pub fn distill_pipeline1(
    x: &Matrix,
    x_ts: &TemporalTensor,
    y: &[f64],
    teacher: &TeacherSpec,
    student: &StudentSpec,
) -> Result<DistillRun> {
    if !teacher.with_lr_head {
        return Err(Error::config("with_lr_head", "pipeline 1 needs the logistic regression head"));
    }
    let trained = train_teacher(teacher, x, x_ts, y)?;
    distill_from_teacher(trained, teacher, x, x_ts, y, student, &[])
}

/// Teacher → `y_nn` → student on `x`.
pub fn distill_pipeline2(
    x: &Matrix,
    x_ts: &TemporalTensor,
    y: &[f64],
    teacher: &TeacherSpec,
    student: &StudentSpec,
) -> Result<DistillRun> {
    if teacher.with_lr_head {
        return Err(Error::config("with_lr_head", "pipeline 2 uses the teacher's own output"));
    }
    let trained = train_teacher(teacher, x, x_ts, y)?;
    distill_from_teacher(trained, teacher, x, x_ts, y, student, &[])
}

/// Agreement between student and teacher scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub mse: f64,
    /// 0 when either side is constant.
    pub pearson_r: f64,
    /// Kendall's tau-b; 0 when either side is constant.
    pub rank_agreement: f64,
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0)
}

pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let (mut concordant, mut discordant, mut ties_a, mut ties_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 && db == 0.0 {
                continue;
            } else if da == 0.0 {
                ties_a += 1;
            } else if db == 0.0 {
                ties_b += 1;
            } else if (da > 0.0) == (db > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n1 = (concordant + discordant + ties_a) as f64;
    let n2 = (concordant + discordant + ties_b) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    (concordant - discordant) as f64 / libm::sqrt(n1 * n2)
}

/// MSE, Pearson r and Kendall tau between two aligned score vectors.
pub fn fidelity(student: &[f64], teacher: &[f64]) -> Result<Fidelity> {
    if student.len() != teacher.len() {
        return Err(Error::shape(format!("{} student vs {} teacher scores", student.len(), teacher.len())));
    }
    if student.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: student.len(),
        });
    }
    let mse = student.iter().zip(teacher).map(|(s, t)| (s - t) * (s - t)).sum::<f64>() / student.len() as f64;
    Ok(Fidelity {
        mse,
        pearson_r: pearson(student, teacher),
        rank_agreement: kendall_tau_b(student, teacher),
    })
}

/// Fidelity of the clamped student predictions on `x_eval` to `teacher_scores`.
pub fn fidelity_report(m: &MimicModel, teacher_scores: &[f64], x_eval: &Matrix) -> Result<Fidelity> {
    fidelity(&m.predict_clamped(x_eval)?, teacher_scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{flatten, impute_missing, synth_generate, FeatureView, SynthConfig, Task};
    use crate::neural::LayerParams;
    use crate::rng::seeded;
    use alloc::vec;
    use rand::Rng as _;

    struct Fixture {
        x: Matrix,
        x_ts: TemporalTensor,
        y: Vec<f64>,
    }

    fn fixture(n: usize) -> Fixture {
        let cfg = SynthConfig { n_samples: n, seed: 11, ..SynthConfig::default() };
        let ds = impute_missing(&synth_generate(&cfg).unwrap()).unwrap();
        let dm = flatten(&ds, FeatureView::All).unwrap();
        Fixture {
            x: dm.values,
            x_ts: ds.temporal.clone(),
            y: ds.label_f64(Task::Mor).unwrap(),
        }
    }

    fn quick(kind: TeacherKind, lr: bool) -> TeacherSpec {
        let mut spec = TeacherSpec::new(kind, lr).with_seed(5);
        spec.train_config.epochs = 5;
        spec.train_config.learning_rate = 0.05;
        spec
    }

    fn small_gbt() -> StudentSpec {
        StudentSpec {
            kind: StudentKind::Gbt,
            config: TreeConfig { n_stages: 30, ..TreeConfig::gbt() },
        }
    }

    #[test]
    fn pipelines_check_the_head_flag() {
        let f = fixture(40);
        assert!(matches!(
            distill_pipeline1(&f.x, &f.x_ts, &f.y, &quick(TeacherKind::Dnn, false), &small_gbt()),
            Err(Error::InvalidConfig { field: "with_lr_head", .. })
        ));
        assert!(matches!(
            distill_pipeline2(&f.x, &f.x_ts, &f.y, &quick(TeacherKind::Dnn, true), &small_gbt()),
            Err(Error::InvalidConfig { field: "with_lr_head", .. })
        ));
    }

    #[test]
    fn pipeline_one_student_tracks_the_lr_scores() {
        let f = fixture(200);
        let run = distill_pipeline1(&f.x, &f.x_ts, &f.y, &quick(TeacherKind::Dnn, true), &StudentSpec::gbt()).unwrap();
        assert_eq!(run.mimic.pipeline, Pipeline::P1);
        let student = run.mimic.predict(&f.x).unwrap();
        assert!(pearson(&student, &run.soft_targets) > 0.9);
        assert!(run.lr_head.is_some());
    }

    #[test]
    fn lstm_student_reads_the_flat_matrix() {
        let f = fixture(60);
        let run = distill_pipeline2(&f.x, &f.x_ts, &f.y, &quick(TeacherKind::Lstm, false), &small_gbt()).unwrap();
        assert_eq!(run.mimic.student.n_features(), f.x.cols);
        assert!(matches!(run.teacher.model, NeuralModel::Lstm(_)));
        assert!(run.mimic.predict(&f.x).is_ok());
    }

    #[test]
    fn zero_output_weights_give_a_flat_student() {
        let f = fixture(60);
        let mut teacher = train_teacher(&quick(TeacherKind::Dnn, false), &f.x, &f.x_ts, &f.y).unwrap();
        if let NeuralModel::Mlp(m) = &mut teacher.model {
            m.prediction_layer = LayerParams::zeros(m.prediction_layer.fan_in(), 1, m.prediction_layer.activation);
        }
        let spec = quick(TeacherKind::Dnn, false);
        let run = distill_from_teacher(teacher, &spec, &f.x, &f.x_ts, &f.y, &small_gbt(), &[]).unwrap();
        assert!(run.soft_targets.iter().all(|&s| s == 0.5));
        assert!(run.mimic.predict(&f.x).unwrap().iter().all(|p| (p - 0.5).abs() < 1e-6));
    }

    #[test]
    fn constant_teacher_features_give_base_rate_scores() {
        let f = fixture(80);
        let mut teacher = train_teacher(&quick(TeacherKind::Dnn, true), &f.x, &f.x_ts, &f.y).unwrap();
        if let NeuralModel::Mlp(m) = &mut teacher.model {
            // zero weights into the top layer make its activations constant
            let top = m.layers.last_mut().unwrap();
            *top = LayerParams::zeros(top.fan_in(), top.fan_out(), top.activation);
        }
        let spec = quick(TeacherKind::Dnn, true);
        let run = distill_from_teacher(teacher, &spec, &f.x, &f.x_ts, &f.y, &small_gbt(), &[]).unwrap();
        let p = run.mimic.predict(&f.x).unwrap();
        let spread = p.iter().copied().fold(f64::NEG_INFINITY, f64::max) - p.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(spread < 0.05);
        assert!((mean(&p) - mean(&f.y)).abs() < 0.05);
    }

    #[test]
    fn student_never_reads_the_labels() {
        let f = fixture(60);
        let spec = quick(TeacherKind::Sda, true);
        let teacher = train_teacher(&spec, &f.x, &f.x_ts, &f.y).unwrap();
        let (_, soft) = soft_targets_p1(&teacher, &f.x, &f.x_ts, &f.y, &spec.lr_config).unwrap();
        let from_soft = fit_student(&f.x, &soft, &small_gbt()).unwrap();
        let run = distill_from_teacher(teacher, &spec, &f.x, &f.x_ts, &f.y, &small_gbt(), &[]).unwrap();
        assert_eq!(run.mimic.student, from_soft);
    }

    #[test]
    fn single_tree_student_fits_soft_targets_exactly() {
        let f = fixture(80);
        let spec = quick(TeacherKind::Dnn, false);
        let run = distill_pipeline2(&f.x, &f.x_ts, &f.y, &spec, &StudentSpec::single_tree()).unwrap();
        let p = run.mimic.predict(&f.x).unwrap();
        assert_eq!(fidelity(&p, &run.soft_targets).unwrap().mse, 0.0);
    }

    #[test]
    fn distillation_is_reproducible() {
        let f = fixture(50);
        let spec = quick(TeacherKind::Lstm, true);
        let a = distill_pipeline1(&f.x, &f.x_ts, &f.y, &spec, &small_gbt()).unwrap();
        let b = distill_pipeline1(&f.x, &f.x_ts, &f.y, &spec, &small_gbt()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn student_is_closer_to_soft_targets_than_to_labels() {
        let f = fixture(120);
        let run = distill_pipeline2(&f.x, &f.x_ts, &f.y, &quick(TeacherKind::Dnn, false), &StudentSpec::gbt()).unwrap();
        let p = run.mimic.predict(&f.x).unwrap();
        let to_soft = fidelity(&p, &run.soft_targets).unwrap().mse;
        let to_labels = fidelity(&p, &f.y).unwrap().mse;
        assert!(to_soft < to_labels);
    }

    #[test]
    fn one_stage_student_structure() {
        let f = fixture(40);
        let student = StudentSpec {
            kind: StudentKind::Gbt,
            config: TreeConfig { n_stages: 1, ..TreeConfig::gbt() },
        };
        let run = distill_pipeline2(&f.x, &f.x_ts, &f.y, &quick(TeacherKind::Dnn, false), &student).unwrap();
        let TreeModel::Gbt(g) = &run.mimic.student else { panic!("expected an ensemble") };
        assert_eq!(g.stages.len(), 1);
        assert!(g.stages[0].depth() <= 3);
        assert_eq!(g.base_score, mean(&run.soft_targets));
    }

    #[test]
    fn fidelity_identities() {
        let t = [0.1, 0.5, 0.3, 0.9];
        let same = fidelity(&t, &t).unwrap();
        assert_eq!((same.mse, same.pearson_r, same.rank_agreement), (0.0, 1.0, 1.0));
        let affine: Vec<f64> = t.iter().map(|v| 0.5 * v + 0.1).collect();
        let f = fidelity(&affine, &t).unwrap();
        assert!((f.pearson_r - 1.0).abs() < 1e-12);
        assert!(f.mse > 0.0);
        assert!(matches!(fidelity(&[0.1], &[0.2]), Err(Error::TooFewRows { needed: 2, got: 1 })));
    }

    #[test]
    fn independent_scores_are_uncorrelated() {
        let mut rng = seeded(3);
        let a: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        assert!(fidelity(&a, &b).unwrap().pearson_r.abs() < 0.1);
    }

    #[test]
    fn report_clamps_only_the_outputs() {
        let f = fixture(40);
        let run = distill_pipeline2(&f.x, &f.x_ts, &f.y, &quick(TeacherKind::Dnn, false), &small_gbt()).unwrap();
        let mut m = run.mimic.clone();
        if let TreeModel::Gbt(g) = &mut m.student {
            g.base_score += 5.0;
        }
        assert!(m.predict(&f.x).unwrap().iter().all(|&p| p > 1.0));
        assert!(m.predict_clamped(&f.x).unwrap().iter().all(|&p| p == 1.0));
        let teacher = vec![1.0; f.x.rows];
        assert_eq!(fidelity_report(&m, &teacher, &f.x).unwrap().mse, 0.0);
    }
}
