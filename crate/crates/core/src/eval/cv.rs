use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{auc, BaselineKind, MethodSpec};
use crate::data::{flatten, sequence_view, Dataset, FeatureView, Task, TemporalTensor};
use crate::distill::{fit_student, soft_targets_p1, train_teacher, StudentKind, StudentSpec, TeacherKind, TeacherSpec, TrainedTeacher};
use crate::linalg::{mean, sample_std, Matrix};
use crate::linear::{train_linsvm, train_logreg, LinearConfig, LinearModel};
use crate::neural::TrainConfig;
use crate::rng::{derive_seed, label_hash, seeded};
use crate::trees::{cart_fit, gbt_fit, TreeConfig, TreeKind, TreeModel};
use crate::{Error, Result};

/// Hyperparameters of every trainable method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSettings {
    pub dnn: TrainConfig,
    pub sda: TrainConfig,
    pub lstm: TrainConfig,
    pub logreg: LinearConfig,
    pub linsvm: LinearConfig,
    pub gbt: TreeConfig,
    pub single_tree: TreeConfig,
}

impl Default for MethodSettings {
    fn default() -> Self {
        MethodSettings {
            dnn: TrainConfig::default(),
            sda: TrainConfig::default(),
            lstm: TrainConfig::lstm(),
            logreg: LinearConfig::logreg(),
            linsvm: LinearConfig::linsvm(),
            gbt: TreeConfig::gbt(),
            single_tree: TreeConfig::single_tree(),
        }
    }
}

impl MethodSettings {
    pub fn validate(&self) -> Result<()> {
        self.dnn.validate()?;
        self.sda.validate()?;
        self.lstm.validate()?;
        self.logreg.validate()?;
        self.linsvm.validate()?;
        self.gbt.validate()?;
        self.single_tree.validate()
    }

    pub fn teacher_config(&self, kind: TeacherKind) -> &TrainConfig {
        match kind {
            TeacherKind::Dnn => &self.dnn,
            TeacherKind::Sda => &self.sda,
            TeacherKind::Lstm => &self.lstm,
        }
    }

    pub fn teacher_config_mut(&mut self, kind: TeacherKind) -> &mut TrainConfig {
        match kind {
            TeacherKind::Dnn => &mut self.dnn,
            TeacherKind::Sda => &mut self.sda,
            TeacherKind::Lstm => &mut self.lstm,
        }
    }

    pub fn teacher_spec(&self, kind: TeacherKind, with_lr_head: bool) -> TeacherSpec {
        TeacherSpec {
            kind,
            with_lr_head,
            train_config: self.teacher_config(kind).clone(),
            lr_config: self.logreg.clone(),
        }
    }

    pub fn student_spec(&self, kind: StudentKind) -> StudentSpec {
        StudentSpec {
            kind,
            config: match kind {
                StudentKind::Gbt => self.gbt.clone(),
                StudentKind::Tree => self.single_tree.clone(),
            },
        }
    }
}

/// Protocol and per-method settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub trials: usize,
    pub folds: usize,
    pub seed: u64,
    /// Keep the fitted tree models of every fold (for importance reports).
    pub keep_models: bool,
    pub methods: MethodSettings,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            trials: 5,
            folds: 5,
            seed: 0,
            keep_models: true,
            methods: MethodSettings::default(),
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.folds < 2 {
            return Err(Error::config("folds", "must be at least 2"));
        }
        self.methods.validate()
    }

    /// Seed of the teacher trained in (trial, fold). Every method built on
    /// the same teacher kind shares it, so they are compared on one network.
    pub fn teacher_seed(&self, kind: TeacherKind, view: FeatureView, task: Task, trial: usize, fold: usize) -> u64 {
        derive_seed(
            self.seed,
            &[
                label_hash("teacher"),
                trial as u64,
                fold as u64,
                label_hash(kind.as_str()),
                label_hash(view.as_str()),
                label_hash(task.as_str()),
            ],
        )
    }
}

/// Inputs of one (task, view) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct CvData {
    pub task: Task,
    pub view: FeatureView,
    pub x: Matrix,
    pub feature_names: Vec<String>,
    pub x_ts: TemporalTensor,
    pub labels: Vec<u8>,
}

impl CvData {
    /// Flattens an imputed dataset under `view`.
    pub fn prepare(ds: &Dataset, task: Task, view: FeatureView) -> Result<Self> {
        let dm = flatten(ds, view)?;
        Ok(CvData {
            task,
            view,
            x: dm.values,
            feature_names: dm.column_names,
            x_ts: sequence_view(ds, view)?,
            labels: ds.label(task)?.to_vec(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x.rows
    }
}

/// Test indices per trial and fold: `plan[trial][fold]`, each sorted. Every
/// trial is a fresh seeded shuffle cut into `folds` nearly equal parts.
pub fn fold_plan(n: usize, trials: usize, folds: usize, seed: u64) -> Result<Vec<Vec<Vec<usize>>>> {
    if folds < 2 {
        return Err(Error::config("folds", "must be at least 2"));
    }
    if n < folds {
        return Err(Error::TooFewRows { needed: folds, got: n });
    }
    Ok((0..trials)
        .map(|trial| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut seeded(derive_seed(seed, &[label_hash("folds"), trial as u64])));
            (0..folds)
                .map(|f| {
                    let mut test = idx[f * n / folds..(f + 1) * n / folds].to_vec();
                    test.sort_unstable();
                    test
                })
                .collect()
        })
        .collect())
}

/// Seeded (train, test) row split with `round(n · fraction)` test rows, both sorted.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config("holdout", "must lie in [0, 1)"));
    }
    let n_test = libm::round(n as f64 * fraction) as usize;
    if fraction > 0.0 && (n_test == 0 || n_test >= n) {
        return Err(Error::config("holdout", format!("leaves {n_test} of {n} rows for testing")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(derive_seed(seed, &[label_hash("holdout")])));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FoldJob {
    pub trial: usize,
    pub fold: usize,
}

pub fn plan_jobs(cfg: &CvConfig) -> Vec<FoldJob> {
    (0..cfg.trials)
        .flat_map(|trial| (0..cfg.folds).map(move |fold| FoldJob { trial, fold }))
        .collect()
}

/// What one method produced on one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: MethodSpec,
    /// `Ok(None)` when the test fold holds a single class.
    pub auc: Result<Option<f64>>,
    pub model: Option<TreeModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub job: FoldJob,
    pub methods: Vec<MethodOutcome>,
}

fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut in_test = alloc::vec![false; n];
    test.iter().for_each(|&i| in_test[i] = true);
    (0..n).filter(|&i| !in_test[i]).collect()
}

/// Everything one teacher produced on the training rows.
struct TeacherFit {
    net: TrainedTeacher,
    /// teacher output on the training rows (`y_nn`)
    soft: Vec<f64>,
    lr: Option<Result<(LinearModel, Vec<f64>)>>,
}

struct FoldContext<'a> {
    cfg: &'a CvConfig,
    data: &'a CvData,
    job: FoldJob,
    x_train: Matrix,
    ts_train: TemporalTensor,
    y_train: Vec<f64>,
    x_test: Matrix,
    ts_test: TemporalTensor,
    teachers: BTreeMap<TeacherKind, core::result::Result<TeacherFit, Error>>,
}

impl FoldContext<'_> {
    fn teacher(&mut self, kind: TeacherKind) -> Result<&mut TeacherFit> {
        if !self.teachers.contains_key(&kind) {
            let mut spec = self.cfg.methods.teacher_spec(kind, false);
            spec.train_config.seed = self
                .cfg
                .teacher_seed(kind, self.data.view, self.data.task, self.job.trial, self.job.fold);
            let fit = train_teacher(&spec, &self.x_train, &self.ts_train, &self.y_train).and_then(|net| {
                let soft = net.predict_soft(&self.x_train, &self.ts_train)?;
                Ok(TeacherFit { net, soft, lr: None })
            });
            self.teachers.insert(kind, fit);
        }
        match self.teachers.get_mut(&kind).expect("inserted above") {
            Ok(fit) => Ok(fit),
            Err(e) => Err(e.clone()),
        }
    }

    fn trained(&self, kind: TeacherKind) -> &TeacherFit {
        match self.teachers.get(&kind) {
            Some(Ok(fit)) => fit,
            _ => unreachable!("teacher is trained before use"),
        }
    }

    /// Logistic regression on the teacher's features; returns its training-row scores.
    fn lr_head(&mut self, kind: TeacherKind) -> Result<(LinearModel, Vec<f64>)> {
        let logreg = self.cfg.methods.logreg.clone();
        let (x_train, ts_train, y_train) = (&self.x_train, &self.ts_train, &self.y_train);
        let fit = match self.teachers.get_mut(&kind) {
            Some(Ok(fit)) => fit,
            _ => unreachable!("teacher is trained before its head"),
        };
        if fit.lr.is_none() {
            fit.lr = Some(soft_targets_p1(&fit.net, x_train, ts_train, y_train, &logreg));
        }
        fit.lr.clone().expect("set above")
    }

    fn scores(&mut self, method: MethodSpec) -> Result<(Vec<f64>, Option<TreeModel>)> {
        match method {
            MethodSpec::Baseline(b) => self.baseline(b),
            MethodSpec::Neural { teacher, lr_head } => {
                self.teacher(teacher)?;
                if lr_head {
                    let (lr, _) = self.lr_head(teacher)?;
                    let fit = self.trained(teacher);
                    let features = fit.net.extract_features(&self.x_test, &self.ts_test)?;
                    Ok((lr.predict_scores(&features)?, None))
                } else {
                    let fit = self.trained(teacher);
                    Ok((fit.net.predict_soft(&self.x_test, &self.ts_test)?, None))
                }
            }
            MethodSpec::Mimic {
                student,
                teacher,
                lr_head,
            } => {
                let soft = if lr_head {
                    self.teacher(teacher)?;
                    self.lr_head(teacher)?.1
                } else {
                    self.teacher(teacher)?.soft.clone()
                };
                let spec = self.cfg.methods.student_spec(student);
                let model = fit_student(&self.x_train, &soft, &spec)?;
                let scores = model.predict(&self.x_test)?.into_iter().map(|p| p.clamp(0.0, 1.0)).collect();
                Ok((scores, Some(model)))
            }
        }
    }

    fn baseline(&self, kind: BaselineKind) -> Result<(Vec<f64>, Option<TreeModel>)> {
        let (x, y, test) = (&self.x_train, &self.y_train, &self.x_test);
        match kind {
            BaselineKind::Svm => Ok((train_linsvm(x, y, &self.cfg.methods.linsvm)?.0.predict_scores(test)?, None)),
            BaselineKind::Lr => Ok((train_logreg(x, y, &self.cfg.methods.logreg)?.0.predict_scores(test)?, None)),
            BaselineKind::Dt => {
                let model = TreeModel::Tree(cart_fit(x, y, &self.cfg.methods.single_tree, TreeKind::ClassifierGini)?);
                Ok((model.predict(test)?, Some(model)))
            }
            BaselineKind::Gbt => {
                let model = TreeModel::Gbt(gbt_fit(x, y, &self.cfg.methods.gbt)?);
                Ok((model.predict(test)?, Some(model)))
            }
        }
    }
}

/// Trains and scores every method on one fold. Teachers and their logistic
/// regression heads are trained once and shared by all methods built on them.
pub fn run_job(data: &CvData, methods: &[MethodSpec], cfg: &CvConfig, plan: &[Vec<Vec<usize>>], job: FoldJob) -> FoldOutcome {
    let test = &plan[job.trial][job.fold];
    let train = complement(data.n_samples(), test);
    let all_labels: Vec<f64> = data.labels.iter().map(|&v| f64::from(v)).collect();
    let test_labels: Vec<u8> = test.iter().map(|&i| data.labels[i]).collect();
    let mut ctx = FoldContext {
        cfg,
        data,
        job,
        x_train: data.x.select_rows(&train),
        ts_train: data.x_ts.select_samples(&train),
        y_train: train.iter().map(|&i| all_labels[i]).collect(),
        x_test: data.x.select_rows(test),
        ts_test: data.x_ts.select_samples(test),
        teachers: BTreeMap::new(),
    };
    let single_class = !(test_labels.contains(&0) && test_labels.contains(&1));
    let methods = methods
        .iter()
        .map(|&method| {
            if single_class {
                return MethodOutcome {
                    method,
                    auc: Ok(None),
                    model: None,
                };
            }
            match ctx.scores(method) {
                Ok((scores, model)) => MethodOutcome {
                    method,
                    auc: auc(&scores, &test_labels).map(Some),
                    model: model
                        .filter(|_| cfg.keep_models)
                        .map(|m| m.with_feature_names(data.feature_names.clone())),
                },
                Err(e) => MethodOutcome {
                    method,
                    auc: Err(e),
                    model: None,
                },
            }
        })
        .collect();
    FoldOutcome { job, methods }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub trial: usize,
    pub fold: usize,
}

/// Aggregated held-out AUCs of one (method, task, view) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub method: MethodSpec,
    pub task: Task,
    pub view: FeatureView,
    /// In (trial, fold) order, skipped folds left out.
    pub fold_aucs: Vec<f64>,
    pub auc_mean: f64,
    /// Sample standard deviation over `fold_aucs`.
    pub auc_std: f64,
    pub skipped_folds: Vec<SkippedFold>,
}

/// A cell's result with the fold models behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct CvRun {
    pub result: CvResult,
    pub models: Vec<(FoldJob, TreeModel)>,
}

/// Collects fold outcomes (any order) into one result per method, in
/// `methods` order. A method that failed on any fold yields that error.
pub fn assemble(data: &CvData, methods: &[MethodSpec], mut outcomes: Vec<FoldOutcome>) -> Vec<Result<CvRun>> {
    outcomes.sort_by_key(|o| o.job);
    methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let mut fold_aucs = Vec::new();
            let mut skipped_folds = Vec::new();
            let mut models = Vec::new();
            for o in &outcomes {
                let out = &o.methods[m];
                match &out.auc {
                    Ok(Some(a)) => fold_aucs.push(*a),
                    Ok(None) => skipped_folds.push(SkippedFold {
                        trial: o.job.trial,
                        fold: o.job.fold,
                    }),
                    Err(e) => return Err(e.clone()),
                }
                if let Some(model) = &out.model {
                    models.push((o.job, model.clone()));
                }
            }
            if fold_aucs.is_empty() {
                return Err(Error::SingleClass);
            }
            Ok(CvRun {
                result: CvResult {
                    method,
                    task: data.task,
                    view: data.view,
                    auc_mean: mean(&fold_aucs),
                    auc_std: sample_std(&fold_aucs),
                    fold_aucs,
                    skipped_folds,
                },
                models,
            })
        })
        .collect()
}

/// Runs all methods over the same folds, sequentially.
pub fn cross_validate_many(methods: &[MethodSpec], data: &CvData, cfg: &CvConfig) -> Result<Vec<Result<CvRun>>> {
    cfg.validate()?;
    let plan = fold_plan(data.n_samples(), cfg.trials, cfg.folds, cfg.seed)?;
    let outcomes = plan_jobs(cfg)
        .into_iter()
        .map(|job| run_job(data, methods, cfg, &plan, job))
        .collect();
    Ok(assemble(data, methods, outcomes))
}

pub fn cross_validate(method: MethodSpec, data: &CvData, cfg: &CvConfig) -> Result<CvRun> {
    cross_validate_many(&[method], data, cfg)?
        .pop()
        .unwrap_or_else(|| Err(Error::Unsupported("no result".to_string())))
}
