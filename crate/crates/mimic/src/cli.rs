//! The `mimic` command line.
//!
//! Every subcommand resolves its settings from defaults, then the JSON file
//! given by `--config`, then flags, and writes the result to `run.json` in
//! the output directory before doing any work.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mimic_core::data::{flatten, impute_missing, sequence_view, synth_generate, Dataset, FeatureView, SynthConfig, Task};
use mimic_core::distill::{
    distill_from_teacher, fidelity, soft_targets_p1, train_teacher, Pipeline, StudentKind, TeacherKind,
};
use mimic_core::eval::{
    aggregate_importance, auc, holdout_split, render_table, BenchCell, BaselineKind, CvConfig, ImportanceReport,
    MethodSettings, MethodSpec,
};
use mimic_core::linear::{train_linsvm, train_logreg};
use mimic_core::neural::{gradient_check, GradCheckKind, GradCheckSpec};
use mimic_core::rng::{derive_seed, label_hash};
use mimic_core::trees::{cart_fit, export_dot, gbt_fit, TreeKind, TreeModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::model_file::{
    load_model, save_model, FoldModels, LinearArtifact, MimicArtifact, NeuralArtifact, StoredModel, TreeArtifact,
};
use crate::{bench, io};

#[derive(Debug, Parser)]
#[command(name = "mimic", version, about = "Interpretable mimic learning: neural teachers distilled into tree students")]
pub struct Cli {
    /// JSON file with settings for the subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed every random choice derives from.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, or the main output file when it has an extension.
    #[arg(short = 'o', long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort as CSV.
    Synth(SynthArgs),
    /// Train one method on a dataset.
    Train(TrainArgs),
    /// Distill a teacher into a tree student and report fidelity.
    Distill(DistillArgs),
    /// Cross-validate a matrix of methods, views and tasks.
    Bench(BenchArgs),
    /// Aggregate feature importance over cross-validation fold models.
    Importance(ImportanceArgs),
    /// Write one tree of a model as a Graphviz file.
    ExportTree(ExportTreeArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_from_str<T: std::str::FromStr<Err = mimic_core::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: mimic_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub q_static: Option<usize>,
    #[arg(long)]
    pub p_temporal: Option<usize>,
    #[arg(long)]
    pub t_steps: Option<usize>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
    #[arg(long)]
    pub n_informative_temporal: Option<usize>,
    #[arg(long)]
    pub n_informative_static: Option<usize>,
    #[arg(long)]
    pub label_noise: Option<f64>,
    #[arg(long)]
    pub n_zero_day0: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset CSV.
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = parse_from_str::<Task>)]
    pub task: Option<Task>,
    #[arg(long, value_parser = parse_from_str::<FeatureView>)]
    pub view: Option<FeatureView>,
    /// Fraction of rows held out for evaluation.
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Epochs of every teacher network.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Method id, e.g. `GBT`, `LR-SDA`, `GBTmimic-LSTM`.
    #[arg(long, value_parser = parse_from_str::<MethodSpec>)]
    pub method: Option<MethodSpec>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_parser = parse_serde::<TeacherKind>)]
    pub teacher: Option<TeacherKind>,
    /// `p1` (features, logistic regression, student) or `p2` (soft predictions, student).
    #[arg(long, value_parser = parse_serde::<Pipeline>)]
    pub pipeline: Option<Pipeline>,
    /// `gbt` or `tree`.
    #[arg(long, value_parser = parse_serde::<StudentKind>)]
    pub student: Option<StudentKind>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    /// Comma-separated method ids.
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<MethodSpec>)]
    pub methods: Option<Vec<MethodSpec>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<FeatureView>)]
    pub views: Option<Vec<FeatureView>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<Task>)]
    pub tasks: Option<Vec<Task>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write the fold models of every tree-based cell.
    #[arg(long)]
    pub save_models: bool,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    /// Fold-model files or directories holding them.
    #[arg(value_name = "PATH")]
    pub models: Vec<PathBuf>,
    /// Number of top features to list.
    #[arg(short, long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportTreeArgs {
    /// Model file holding a tree, an ensemble, a mimic model or fold models.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Boosting stage to draw.
    #[arg(long)]
    pub stage: Option<usize>,
    /// Fold to draw from a fold-model file.
    #[arg(long)]
    pub fold: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_parser = parse_from_str::<GradCheckKind>)]
    pub model: Option<GradCheckKind>,
    #[arg(long)]
    pub inputs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub seed: u64,
    pub synth: SynthConfig,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            seed: 0,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub method: MethodSpec,
    pub task: Task,
    pub view: FeatureView,
    pub holdout: f64,
    pub params: MethodSettings,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            seed: 0,
            data: None,
            method: MethodSpec::Baseline(BaselineKind::Gbt),
            task: Task::Mor,
            view: FeatureView::All,
            holdout: 0.0,
            params: MethodSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSettings {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub teacher: TeacherKind,
    pub pipeline: Pipeline,
    pub student: StudentKind,
    pub task: Task,
    pub view: FeatureView,
    pub holdout: f64,
    pub params: MethodSettings,
}

impl Default for DistillSettings {
    fn default() -> Self {
        DistillSettings {
            seed: 0,
            data: None,
            teacher: TeacherKind::Dnn,
            pipeline: Pipeline::P1,
            student: StudentKind::Gbt,
            task: Task::Mor,
            view: FeatureView::All,
            holdout: 0.2,
            params: MethodSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub methods: Vec<MethodSpec>,
    pub views: Vec<FeatureView>,
    pub tasks: Vec<Task>,
    /// Explicit matrix; replaces methods × views × tasks when non-empty.
    pub cells: Vec<BenchCell>,
    pub cv: CvConfig,
    pub threads: usize,
    pub save_models: bool,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            seed: 0,
            data: None,
            methods: MethodSpec::all(),
            views: FeatureView::ALL.to_vec(),
            tasks: Task::ALL.to_vec(),
            cells: Vec::new(),
            cv: CvConfig::default(),
            threads: 0,
            save_models: false,
        }
    }
}

impl BenchSettings {
    pub fn matrix(&self) -> Vec<BenchCell> {
        if !self.cells.is_empty() {
            return self.cells.clone();
        }
        let mut out = Vec::new();
        for &task in &self.tasks {
            for &view in &self.views {
                out.extend(self.methods.iter().map(|&m| BenchCell::new(m, view, task)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceSettings {
    pub seed: u64,
    pub models: Vec<PathBuf>,
    pub k: usize,
}

impl Default for ImportanceSettings {
    fn default() -> Self {
        ImportanceSettings {
            seed: 0,
            models: Vec::new(),
            k: 6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportTreeSettings {
    pub seed: u64,
    pub model: Option<PathBuf>,
    pub stage: usize,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSettings {
    pub seed: u64,
    pub spec: GradCheckSpec,
    pub eps: f64,
    pub tolerance: f64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        GradcheckSettings {
            seed: 1,
            spec: GradCheckSpec::mlp(),
            eps: 1e-6,
            tolerance: 1e-4,
        }
    }
}

/// What `run.json` records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig<S> {
    pub command: String,
    pub version: String,
    pub out: PathBuf,
    pub settings: S,
}

/// Where a command writes: its main file and the directory for the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub dir: PathBuf,
    pub main: PathBuf,
}

impl Output {
    fn new(out: &Path, default_name: &str) -> Self {
        if out.extension().is_some() {
            let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            Output {
                dir: dir.to_path_buf(),
                main: out.to_path_buf(),
            }
        } else {
            Output {
                dir: out.to_path_buf(),
                main: out.join(default_name),
            }
        }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

const DEFAULT_OUT: &str = "mimic-out";

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_settings<S: DeserializeOwned + Default>(config: Option<&Path>) -> CliResult<S> {
    match config {
        Some(path) => io::read_json(path),
        None => Ok(S::default()),
    }
}

fn begin<S: Serialize>(cli: &Cli, command: &str, settings: &S, default_name: &str) -> CliResult<Output> {
    let out = Output::new(cli.out.as_deref().unwrap_or(Path::new(DEFAULT_OUT)), default_name);
    let run = RunConfig {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        out: cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        settings,
    };
    io::write_json(&out.file("run.json"), &run)?;
    Ok(out)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Synth(a) => {
            let mut s: SynthSettings = load_settings(config)?;
            resolve_synth(&mut s, cli.seed, a);
            s.synth.validate()?;
            let out = begin(cli, "synth", &s, "data.csv")?;
            synth(&s, &out)
        }
        Command::Train(a) => {
            let mut s: TrainSettings = load_settings(config)?;
            resolve_data(&mut s.data, &mut s.task, &mut s.view, &mut s.holdout, &a.data);
            s.method = a.method.unwrap_or(s.method);
            s.seed = cli.seed.unwrap_or(s.seed);
            seed_teachers(&mut s.params, s.seed, a.data.epochs);
            s.params.validate()?;
            let out = begin(cli, "train", &s, "model.json")?;
            train(&s, &out)
        }
        Command::Distill(a) => {
            let mut s: DistillSettings = load_settings(config)?;
            resolve_data(&mut s.data, &mut s.task, &mut s.view, &mut s.holdout, &a.data);
            s.teacher = a.teacher.unwrap_or(s.teacher);
            s.pipeline = a.pipeline.unwrap_or(s.pipeline);
            s.student = a.student.unwrap_or(s.student);
            s.seed = cli.seed.unwrap_or(s.seed);
            seed_teachers(&mut s.params, s.seed, a.data.epochs);
            s.params.validate()?;
            let out = begin(cli, "distill", &s, "mimic.json")?;
            distill(&s, &out)
        }
        Command::Bench(a) => {
            let mut s: BenchSettings = load_settings(config)?;
            resolve_bench(&mut s, cli.seed, a);
            s.cv.validate()?;
            let out = begin(cli, "bench", &s, "report.json")?;
            bench_command(&s, &out)
        }
        Command::Importance(a) => {
            let mut s: ImportanceSettings = load_settings(config)?;
            s.seed = cli.seed.unwrap_or(s.seed);
            if !a.models.is_empty() {
                s.models = a.models.clone();
            }
            s.k = a.k.unwrap_or(s.k);
            if s.models.is_empty() {
                return Err(CliError::validation("models", "give at least one fold-model file or directory"));
            }
            let out = begin(cli, "importance", &s, "importance.json")?;
            importance(&s, &out)
        }
        Command::ExportTree(a) => {
            let mut s: ExportTreeSettings = load_settings(config)?;
            s.seed = cli.seed.unwrap_or(s.seed);
            s.model = a.model.clone().or(s.model);
            s.stage = a.stage.unwrap_or(s.stage);
            s.fold = a.fold.unwrap_or(s.fold);
            if s.model.is_none() {
                return Err(CliError::validation("model", "required"));
            }
            let out = begin(cli, "export-tree", &s, "tree.dot")?;
            export_tree(&s, &out)
        }
        Command::Gradcheck(a) => {
            let mut s: GradcheckSettings = load_settings(config)?;
            resolve_gradcheck(&mut s, cli.seed, a);
            if !(s.eps > 0.0) {
                return Err(CliError::validation("eps", "must be positive"));
            }
            let out = begin(cli, "gradcheck", &s, "gradcheck.json")?;
            gradcheck(&s, &out)
        }
    }
}

fn resolve_synth(s: &mut SynthSettings, seed: Option<u64>, a: &SynthArgs) {
    s.seed = seed.unwrap_or(s.seed);
    let c = &mut s.synth;
    c.seed = s.seed;
    c.n_samples = a.n_samples.unwrap_or(c.n_samples);
    c.q_static = a.q_static.unwrap_or(c.q_static);
    c.p_temporal = a.p_temporal.unwrap_or(c.p_temporal);
    c.t_steps = a.t_steps.unwrap_or(c.t_steps);
    c.missing_rate = a.missing_rate.unwrap_or(c.missing_rate);
    c.n_informative_temporal = a.n_informative_temporal.unwrap_or(c.n_informative_temporal);
    c.n_informative_static = a.n_informative_static.unwrap_or(c.n_informative_static);
    c.label_noise = a.label_noise.unwrap_or(c.label_noise);
    c.n_zero_day0 = a.n_zero_day0.unwrap_or(c.n_zero_day0);
}

fn resolve_data(data: &mut Option<PathBuf>, task: &mut Task, view: &mut FeatureView, holdout: &mut f64, a: &DataArgs) {
    *data = a.data.clone().or(data.take());
    *task = a.task.unwrap_or(*task);
    *view = a.view.unwrap_or(*view);
    *holdout = a.holdout.unwrap_or(*holdout);
}

/// Each teacher kind gets its own seed derived from the run seed.
fn seed_teachers(params: &mut MethodSettings, seed: u64, epochs: Option<usize>) {
    for kind in TeacherKind::ALL {
        let cfg = params.teacher_config_mut(kind);
        cfg.seed = derive_seed(seed, &[label_hash("teacher"), label_hash(kind.as_str())]);
        cfg.epochs = epochs.unwrap_or(cfg.epochs);
    }
}

fn resolve_bench(s: &mut BenchSettings, seed: Option<u64>, a: &BenchArgs) {
    s.seed = seed.unwrap_or(s.seed);
    s.cv.seed = s.seed;
    s.data = a.data.clone().or(s.data.take());
    if let Some(m) = &a.methods {
        s.methods = m.clone();
    }
    if let Some(v) = &a.views {
        s.views = v.clone();
    }
    if let Some(t) = &a.tasks {
        s.tasks = t.clone();
    }
    s.cv.trials = a.trials.unwrap_or(s.cv.trials);
    s.cv.folds = a.folds.unwrap_or(s.cv.folds);
    if let Some(e) = a.epochs {
        for kind in TeacherKind::ALL {
            s.cv.methods.teacher_config_mut(kind).epochs = e;
        }
    }
    s.threads = a.threads.unwrap_or(s.threads);
    s.save_models |= a.save_models;
    s.cv.keep_models = s.save_models;
}

fn resolve_gradcheck(s: &mut GradcheckSettings, seed: Option<u64>, a: &GradcheckArgs) {
    if let Some(kind) = a.model {
        if kind != s.spec.kind {
            s.spec = GradCheckSpec::for_kind(kind);
        }
    }
    s.seed = seed.unwrap_or(s.seed);
    let spec = &mut s.spec;
    spec.seed = s.seed;
    spec.n_inputs = a.inputs.unwrap_or(spec.n_inputs);
    spec.hidden = a.hidden.unwrap_or(spec.hidden);
    spec.n_hidden_layers = a.layers.unwrap_or(spec.n_hidden_layers);
    spec.steps = a.steps.unwrap_or(spec.steps);
    spec.n_samples = a.samples.unwrap_or(spec.n_samples);
    s.eps = a.eps.unwrap_or(s.eps);
    s.tolerance = a.tolerance.unwrap_or(s.tolerance);
}

fn synth(s: &SynthSettings, out: &Output) -> CliResult<()> {
    let ds = synth_generate(&s.synth)?;
    io::save_dataset(&out.main, &ds)?;
    println!(
        "wrote {} patients ({} static, {} temporal variables over {} days, {:.2}% missing) to {}",
        ds.n_samples(),
        ds.q_static(),
        ds.p_temporal(),
        ds.t_steps(),
        100.0 * ds.missing_fraction(),
        out.main.display()
    );
    Ok(())
}

/// Loads a dataset CSV and fills missing cells.
pub fn load_imputed(path: Option<&Path>) -> CliResult<Dataset> {
    let path = path.ok_or_else(|| CliError::validation("data", "required"))?;
    let ds = io::load_dataset(path)?;
    Ok(if ds.is_imputed() { ds } else { impute_missing(&ds)? })
}

/// A dataset flattened under one view and split into training and held-out rows.
struct Split {
    feature_names: Vec<String>,
    x_train: mimic_core::linalg::Matrix,
    ts_train: mimic_core::data::TemporalTensor,
    y_train: Vec<f64>,
    x_test: mimic_core::linalg::Matrix,
    ts_test: mimic_core::data::TemporalTensor,
    labels_test: Vec<u8>,
    labels_train: Vec<u8>,
}

fn split(ds: &Dataset, task: Task, view: FeatureView, holdout: f64, seed: u64) -> CliResult<Split> {
    let dm = flatten(ds, view)?;
    let ts = sequence_view(ds, view)?;
    let labels = ds.label(task)?;
    let (train, test) = holdout_split(ds.n_samples(), holdout, seed)?;
    let pick = |rows: &[usize]| rows.iter().map(|&i| labels[i]).collect::<Vec<u8>>();
    let labels_train = pick(&train);
    Ok(Split {
        feature_names: dm.column_names.clone(),
        x_train: dm.values.select_rows(&train),
        ts_train: ts.select_samples(&train),
        y_train: labels_train.iter().map(|&v| f64::from(v)).collect(),
        x_test: dm.values.select_rows(&test),
        ts_test: ts.select_samples(&test),
        labels_test: pick(&test),
        labels_train,
    })
}

fn auc_or_none(scores: &[f64], labels: &[u8]) -> Option<f64> {
    auc(scores, labels).ok()
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    method: MethodSpec,
    task: Task,
    view: FeatureView,
    n_train: usize,
    n_test: usize,
    train_auc: Option<f64>,
    test_auc: Option<f64>,
    log: serde_json::Value,
}

fn json_value<T: Serialize>(v: &T) -> CliResult<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| CliError::Runtime(format!("encoding JSON: {e}")))
}

fn train(s: &TrainSettings, out: &Output) -> CliResult<()> {
    let ds = load_imputed(s.data.as_deref())?;
    let d = split(&ds, s.task, s.view, s.holdout, s.seed)?;
    let (method, task, view) = (s.method, s.task, s.view);
    let p = &s.params;
    let (stored, train_scores, test_scores, log) = match method {
        MethodSpec::Baseline(b @ (BaselineKind::Svm | BaselineKind::Lr)) => {
            let (model, report) = if b == BaselineKind::Svm {
                train_linsvm(&d.x_train, &d.y_train, &p.linsvm)?
            } else {
                train_logreg(&d.x_train, &d.y_train, &p.logreg)?
            };
            let scores = (model.predict_scores(&d.x_train)?, model.predict_scores(&d.x_test)?);
            let artifact = LinearArtifact {
                method,
                task,
                view,
                feature_names: d.feature_names.clone(),
                model,
            };
            (StoredModel::Linear(artifact), scores.0, scores.1, json_value(&report)?)
        }
        MethodSpec::Baseline(b) => {
            let model = if b == BaselineKind::Dt {
                TreeModel::Tree(cart_fit(&d.x_train, &d.y_train, &p.single_tree, TreeKind::ClassifierGini)?)
            } else {
                TreeModel::Gbt(gbt_fit(&d.x_train, &d.y_train, &p.gbt)?)
            }
            .with_feature_names(d.feature_names.clone());
            let scores = (model.predict(&d.x_train)?, model.predict(&d.x_test)?);
            let log = match &model {
                TreeModel::Tree(t) => serde_json::json!({"depth": t.depth(), "n_leaves": t.n_leaves()}),
                TreeModel::Gbt(g) => serde_json::json!({"n_stages": g.stages.len(), "base_score": g.base_score}),
            };
            (StoredModel::Tree(TreeArtifact { method, task, view, model }), scores.0, scores.1, log)
        }
        MethodSpec::Neural { teacher, lr_head } => {
            let spec = p.teacher_spec(teacher, lr_head);
            let net = train_teacher(&spec, &d.x_train, &d.ts_train, &d.y_train)?;
            let (head, scores) = if lr_head {
                let (lr, train_scores) = soft_targets_p1(&net, &d.x_train, &d.ts_train, &d.y_train, &spec.lr_config)?;
                let test_scores = lr.predict_scores(&net.extract_features(&d.x_test, &d.ts_test)?)?;
                (Some(lr), (train_scores, test_scores))
            } else {
                let scores = (
                    net.predict_soft(&d.x_train, &d.ts_train)?,
                    net.predict_soft(&d.x_test, &d.ts_test)?,
                );
                (None, scores)
            };
            let log = json_value(&net.log)?;
            let artifact = NeuralArtifact {
                method,
                task,
                view,
                feature_names: d.feature_names.clone(),
                teacher: net,
                lr_head: head,
            };
            (StoredModel::Neural(artifact), scores.0, scores.1, log)
        }
        MethodSpec::Mimic {
            student,
            teacher,
            lr_head,
        } => {
            let spec = p.teacher_spec(teacher, lr_head);
            let net = train_teacher(&spec, &d.x_train, &d.ts_train, &d.y_train)?;
            let run = distill_from_teacher(
                net,
                &spec,
                &d.x_train,
                &d.ts_train,
                &d.y_train,
                &p.student_spec(student),
                &d.feature_names,
            )?;
            let scores = (run.mimic.predict_clamped(&d.x_train)?, run.mimic.predict_clamped(&d.x_test)?);
            let log = serde_json::json!({
                "teacher": json_value(&run.teacher.log)?,
                "soft_targets": json_value(&run.mimic.soft_target_stats)?,
            });
            let artifact = MimicArtifact {
                method,
                task,
                view,
                model: run.mimic,
            };
            (StoredModel::Mimic(artifact), scores.0, scores.1, log)
        }
    };
    let summary = TrainSummary {
        method,
        task,
        view,
        n_train: d.labels_train.len(),
        n_test: d.labels_test.len(),
        train_auc: auc_or_none(&train_scores, &d.labels_train),
        test_auc: auc_or_none(&test_scores, &d.labels_test),
        log,
    };
    save_model(&out.main, stored)?;
    io::write_json(&out.file("train_log.json"), &summary)?;
    println!("trained {method} on {} rows ({task}, {view})", summary.n_train);
    print_auc("training AUC", summary.train_auc);
    if summary.n_test > 0 {
        print_auc("held-out AUC", summary.test_auc);
    }
    println!("model: {}", out.main.display());
    Ok(())
}

fn print_auc(what: &str, v: Option<f64>) {
    match v {
        Some(a) => println!("{what}: {a:.4}"),
        None => println!("{what}: undefined (one class)"),
    }
}

#[derive(Debug, Serialize)]
struct FidelitySummary {
    teacher: MethodSpec,
    student: MethodSpec,
    task: Task,
    view: FeatureView,
    /// Rows the fidelity is measured on: `held_out` or `training`.
    rows: &'static str,
    n_rows: usize,
    fidelity: mimic_core::distill::Fidelity,
    teacher_auc: Option<f64>,
    student_auc: Option<f64>,
}

fn distill(s: &DistillSettings, out: &Output) -> CliResult<()> {
    let ds = load_imputed(s.data.as_deref())?;
    let d = split(&ds, s.task, s.view, s.holdout, s.seed)?;
    let lr_head = s.pipeline == Pipeline::P1;
    let spec = s.params.teacher_spec(s.teacher, lr_head);
    let net = train_teacher(&spec, &d.x_train, &d.ts_train, &d.y_train)?;
    let run = distill_from_teacher(
        net,
        &spec,
        &d.x_train,
        &d.ts_train,
        &d.y_train,
        &s.params.student_spec(s.student),
        &d.feature_names,
    )?;
    let held_out = !d.labels_test.is_empty();
    let (x, ts, labels) = if held_out {
        (&d.x_test, &d.ts_test, &d.labels_test)
    } else {
        (&d.x_train, &d.ts_train, &d.labels_train)
    };
    let teacher_scores = match &run.lr_head {
        Some(lr) => lr.predict_scores(&run.teacher.extract_features(x, ts)?)?,
        None => run.teacher.predict_soft(x, ts)?,
    };
    let student_scores = run.mimic.predict_clamped(x)?;
    let teacher_id = MethodSpec::Neural {
        teacher: s.teacher,
        lr_head,
    };
    let student_id = MethodSpec::Mimic {
        student: s.student,
        teacher: s.teacher,
        lr_head,
    };
    let summary = FidelitySummary {
        teacher: teacher_id,
        student: student_id,
        task: s.task,
        view: s.view,
        rows: if held_out { "held_out" } else { "training" },
        n_rows: labels.len(),
        fidelity: fidelity(&student_scores, &teacher_scores)?,
        teacher_auc: auc_or_none(&teacher_scores, labels),
        student_auc: auc_or_none(&student_scores, labels),
    };
    save_model(
        &out.main,
        StoredModel::Mimic(MimicArtifact {
            method: student_id,
            task: s.task,
            view: s.view,
            model: run.mimic,
        }),
    )?;
    io::write_json(&out.file("fidelity.json"), &summary)?;
    println!("{student_id} from {teacher_id} ({}, {}), {} rows {}", s.task, s.view, summary.n_rows, summary.rows);
    let f = summary.fidelity;
    println!("mse {:.6}  pearson {:.4}  kendall tau-b {:.4}", f.mse, f.pearson_r, f.rank_agreement);
    print_auc("teacher AUC", summary.teacher_auc);
    print_auc("student AUC", summary.student_auc);
    println!("model: {}", out.main.display());
    Ok(())
}

fn model_file_name(f: &FoldModels) -> String {
    format!("{}_{}_{}.json", f.task.as_str().to_ascii_lowercase(), f.view, f.method.id())
}

fn bench_command(s: &BenchSettings, out: &Output) -> CliResult<()> {
    let ds = load_imputed(s.data.as_deref())?;
    let cells = s.matrix();
    if cells.is_empty() {
        return Err(CliError::validation("methods", "the matrix is empty"));
    }
    let outcome = bench::run_parallel(&ds, &cells, &s.cv, s.threads)?;
    io::write_json(&out.main, &outcome.report)?;
    let table = render_table(&outcome.report);
    io::write_text(&out.file("report.txt"), &table)?;
    if s.save_models {
        for f in bench::fold_models(&outcome) {
            save_model(&out.file("models").join(model_file_name(&f)), StoredModel::FoldModels(f))?;
        }
    }
    print!("{table}");
    println!("report: {}", out.main.display());
    Ok(())
}

fn collect_model_files(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inside: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            inside.sort();
            files.extend(inside);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

#[derive(Debug, Serialize)]
struct ImportanceEntry {
    source: PathBuf,
    method: MethodSpec,
    task: Task,
    view: FeatureView,
    report: ImportanceReport,
}

fn importance(s: &ImportanceSettings, out: &Output) -> CliResult<()> {
    let mut entries = Vec::new();
    for path in collect_model_files(&s.models)? {
        let (method, task, view, models) = match load_model(&path)? {
            StoredModel::FoldModels(f) => (f.method, f.task, f.view, f.models()),
            StoredModel::Tree(t) => (t.method, t.task, t.view, vec![t.model]),
            StoredModel::Mimic(m) => (m.method, m.task, m.view, vec![m.model.student]),
            other => {
                return Err(CliError::validation(
                    "models",
                    format!("{}: a {} model has no feature importance", path.display(), other.kind_name()),
                ))
            }
        };
        let names = models[0].feature_names().to_vec();
        let names = if names.is_empty() {
            (0..models[0].n_features()).map(|i| format!("x[{i}]")).collect()
        } else {
            names
        };
        let report = aggregate_importance(&models, &names, s.k)?;
        entries.push(ImportanceEntry {
            source: path,
            method,
            task,
            view,
            report,
        });
    }
    io::write_json(&out.main, &entries)?;
    let text = importance_table(&entries);
    io::write_text(&out.file("importance.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn importance_table(entries: &[ImportanceEntry]) -> String {
    let mut out = String::new();
    let mut keys: Vec<(Task, FeatureView)> = entries.iter().map(|e| (e.task, e.view)).collect();
    keys.sort();
    keys.dedup();
    for (task, view) in keys {
        let _ = writeln!(out, "{task} / {view}");
        let _ = writeln!(out, "{:<20} Features (Importance Scores)", "Model");
        for e in entries.iter().filter(|e| e.task == task && e.view == view) {
            let feats: Vec<String> = e.report.top_k.iter().map(|(n, v)| format!("{n}({v:.3})")).collect();
            let _ = writeln!(out, "{:<20} {}", e.method.id(), feats.join("  "));
        }
        out.push('\n');
    }
    out
}

fn export_tree(s: &ExportTreeSettings, out: &Output) -> CliResult<()> {
    let path = s.model.as_deref().expect("checked before the run");
    let model = load_model(path)?;
    let tree = model.tree(s.fold, s.stage)?;
    io::write_text(&out.main, &export_dot(tree, &[]))?;
    println!(
        "stage {} ({} leaves, depth {}) written to {}",
        s.stage,
        tree.n_leaves(),
        tree.depth(),
        out.main.display()
    );
    Ok(())
}

fn gradcheck(s: &GradcheckSettings, out: &Output) -> CliResult<()> {
    let report = gradient_check(&s.spec, s.eps)?;
    io::write_json(&out.main, &report)?;
    println!(
        "{:?}: max relative error {:.3e} over {} parameters (worst: {}[{}])",
        report.kind, report.max_rel_error, report.n_params, report.worst_block, report.worst_index
    );
    if report.max_rel_error.is_nan() || report.max_rel_error >= s.tolerance {
        return Err(CliError::Runtime(format!(
            "gradient check failed: {:.3e} is not below {:.0e}",
            report.max_rel_error, s.tolerance
        )));
    }
    Ok(())
}
