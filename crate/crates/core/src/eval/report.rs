use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{assemble, fold_plan, plan_jobs, run_job, CvConfig, CvData, CvRun, FoldJob, FoldOutcome, MethodGroup, MethodSpec, SkippedFold};
use crate::data::{Dataset, FeatureView, Task};
use crate::distill::StudentKind;
use crate::{Error, Result};

/// One (method, view, task) entry of the benchmark matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BenchCell {
    pub method: MethodSpec,
    pub view: FeatureView,
    pub task: Task,
}

impl BenchCell {
    pub fn new(method: MethodSpec, view: FeatureView, task: Task) -> Self {
        BenchCell { method, view, task }
    }

    /// Every method on every view and task.
    pub fn full_matrix() -> Vec<BenchCell> {
        let mut out = Vec::new();
        for task in Task::ALL {
            for view in FeatureView::ALL {
                for method in MethodSpec::all() {
                    out.push(BenchCell { method, view, task });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub method: MethodSpec,
    pub view: FeatureView,
    pub task: Task,
    pub status: CellStatus,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub fold_aucs: Vec<f64>,
    pub skipped_folds: Vec<SkippedFold>,
}

impl CellReport {
    pub fn cell(&self) -> BenchCell {
        BenchCell::new(self.method, self.view, self.task)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffKind {
    AllMinusTemporalOnly,
    AllMinusStaticPlusDay0,
    TemporalOnlyMinusStaticPlusDay0,
    GbtMimicMinusDtMimic,
}

impl DiffKind {
    pub fn title(self) -> &'static str {
        match self {
            DiffKind::AllMinusTemporalOnly => "all - temporal_only",
            DiffKind::AllMinusStaticPlusDay0 => "all - static_plus_day0",
            DiffKind::TemporalOnlyMinusStaticPlusDay0 => "temporal_only - static_plus_day0",
            DiffKind::GbtMimicMinusDtMimic => "GBTmimic - DTmimic",
        }
    }
}

/// Difference of the mean AUCs of two successful cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub kind: DiffKind,
    pub left: BenchCell,
    pub right: BenchCell,
    pub auc_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config_echo: CvConfig,
    pub cells: Vec<CellReport>,
    pub diffs: Vec<DiffEntry>,
}

impl BenchmarkReport {
    pub fn find(&self, cell: BenchCell) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.cell() == cell)
    }

    /// Mean AUC of a successful cell.
    pub fn auc_mean(&self, cell: BenchCell) -> Option<f64> {
        self.find(cell).and_then(|c| c.auc_mean)
    }
}

/// Cells sharing one (task, view) input, run over the same folds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchGroup {
    pub data: Result<CvData>,
    pub plan: Vec<Vec<Vec<usize>>>,
    pub methods: Vec<MethodSpec>,
    /// Position in the matrix of each entry of `methods`.
    pub cell_index: Vec<usize>,
}

/// A benchmark matrix broken into independent fold jobs. Jobs may run in any
/// order or concurrently; [`BenchPlan::finish`] restores the matrix order.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub config: CvConfig,
    pub cells: Vec<BenchCell>,
    pub groups: Vec<BenchGroup>,
}

/// A finished benchmark with the fold models of every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutcome {
    pub report: BenchmarkReport,
    /// Parallel to `report.cells`.
    pub runs: Vec<Option<CvRun>>,
}

impl BenchPlan {
    pub fn new(ds: &Dataset, cells: &[BenchCell], cfg: &CvConfig) -> Result<Self> {
        cfg.validate()?;
        if cells.is_empty() {
            return Err(Error::config("matrix", "no cells"));
        }
        let mut by_input: BTreeMap<(Task, FeatureView), (Vec<MethodSpec>, Vec<usize>)> = BTreeMap::new();
        for (i, c) in cells.iter().enumerate() {
            let entry = by_input.entry((c.task, c.view)).or_default();
            if entry.0.contains(&c.method) {
                return Err(Error::config("matrix", format!("duplicate cell {} / {} / {}", c.method, c.view, c.task)));
            }
            entry.0.push(c.method);
            entry.1.push(i);
        }
        let plan = fold_plan(ds.n_samples(), cfg.trials, cfg.folds, cfg.seed)?;
        let groups = by_input
            .into_iter()
            .map(|((task, view), (methods, cell_index))| BenchGroup {
                data: CvData::prepare(ds, task, view),
                plan: plan.clone(),
                methods,
                cell_index,
            })
            .collect();
        Ok(BenchPlan {
            config: cfg.clone(),
            cells: cells.to_vec(),
            groups,
        })
    }

    /// Every (group, fold) job; groups whose input failed to prepare have none.
    pub fn jobs(&self) -> Vec<(usize, FoldJob)> {
        let folds = plan_jobs(&self.config);
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.data.is_ok())
            .flat_map(|(g, _)| folds.iter().map(move |&j| (g, j)))
            .collect()
    }

    pub fn run(&self, group: usize, job: FoldJob) -> FoldOutcome {
        let g = &self.groups[group];
        let data = g.data.as_ref().expect("jobs only cover prepared groups");
        run_job(data, &g.methods, &self.config, &g.plan, job)
    }

    /// Builds the report from the outcomes of all jobs, in any order.
    pub fn finish(&self, outcomes: Vec<(usize, FoldOutcome)>) -> BenchOutcome {
        let mut per_group: Vec<Vec<FoldOutcome>> = self.groups.iter().map(|_| Vec::new()).collect();
        for (g, o) in outcomes {
            per_group[g].push(o);
        }
        let mut results: Vec<Option<Result<CvRun>>> = self.cells.iter().map(|_| None).collect();
        for (g, outs) in self.groups.iter().zip(per_group) {
            let runs: Vec<Result<CvRun>> = match &g.data {
                Ok(data) => assemble(data, &g.methods, outs),
                Err(e) => g.methods.iter().map(|_| Err(e.clone())).collect(),
            };
            for (&i, r) in g.cell_index.iter().zip(runs) {
                results[i] = Some(r);
            }
        }
        let results: Vec<Result<CvRun>> = results.into_iter().map(|r| r.expect("every cell is in a group")).collect();
        let report = benchmark_report(&self.config, &self.cells, &results);
        BenchOutcome {
            report,
            runs: results.into_iter().map(|r| r.ok()).collect(),
        }
    }
}

/// Runs every cell of the matrix sequentially. Cell failures are recorded
/// in the report and do not stop the other cells.
pub fn run_benchmark(ds: &Dataset, cells: &[BenchCell], cfg: &CvConfig) -> Result<BenchOutcome> {
    let plan = BenchPlan::new(ds, cells, cfg)?;
    let outcomes = plan.jobs().into_iter().map(|(g, j)| (g, plan.run(g, j))).collect();
    Ok(plan.finish(outcomes))
}

fn cell_report(cell: BenchCell, run: &Result<CvRun>) -> CellReport {
    match run {
        Ok(r) => CellReport {
            method: cell.method,
            view: cell.view,
            task: cell.task,
            status: CellStatus::Ok,
            auc_mean: Some(r.result.auc_mean),
            auc_std: Some(r.result.auc_std),
            fold_aucs: r.result.fold_aucs.clone(),
            skipped_folds: r.result.skipped_folds.clone(),
        },
        Err(e) => CellReport {
            method: cell.method,
            view: cell.view,
            task: cell.task,
            status: CellStatus::Failed { message: e.to_string() },
            auc_mean: None,
            auc_std: None,
            fold_aucs: Vec::new(),
            skipped_folds: Vec::new(),
        },
    }
}

/// Report of a finished matrix: one entry per cell in matrix order, then the
/// view differences per (method, task) and the GBTmimic − DTmimic
/// differences per (teacher, view, task) wherever both cells succeeded.
pub fn benchmark_report(cfg: &CvConfig, cells: &[BenchCell], runs: &[Result<CvRun>]) -> BenchmarkReport {
    let reports: Vec<CellReport> = cells.iter().zip(runs).map(|(&c, r)| cell_report(c, r)).collect();
    let mean_of: BTreeMap<BenchCell, f64> = reports.iter().filter_map(|r| Some((r.cell(), r.auc_mean?))).collect();
    let mut diffs = Vec::new();
    let mut push = |kind, left: BenchCell, right: BenchCell| {
        if let (Some(a), Some(b)) = (mean_of.get(&left), mean_of.get(&right)) {
            diffs.push(DiffEntry {
                kind,
                left,
                right,
                auc_diff: a - b,
            });
        }
    };
    for r in reports.iter().filter(|r| r.view == FeatureView::All) {
        let with = |view| BenchCell { view, ..r.cell() };
        push(DiffKind::AllMinusTemporalOnly, r.cell(), with(FeatureView::TemporalOnly));
        push(DiffKind::AllMinusStaticPlusDay0, r.cell(), with(FeatureView::StaticPlusDay0));
    }
    for r in reports.iter().filter(|r| r.view == FeatureView::TemporalOnly) {
        let right = BenchCell { view: FeatureView::StaticPlusDay0, ..r.cell() };
        push(DiffKind::TemporalOnlyMinusStaticPlusDay0, r.cell(), right);
    }
    for r in &reports {
        if let MethodSpec::Mimic {
            student: StudentKind::Gbt,
            teacher,
            lr_head,
        } = r.method
        {
            let dt = MethodSpec::Mimic {
                student: StudentKind::Tree,
                teacher,
                lr_head,
            };
            push(DiffKind::GbtMimicMinusDtMimic, r.cell(), BenchCell { method: dt, ..r.cell() });
        }
    }
    BenchmarkReport {
        config_echo: cfg.clone(),
        cells: reports,
        diffs,
    }
}

/// Plain-text tables: one per (task, view), rows grouped as Baseline,
/// NN-based and Mimic, followed by the difference tables.
pub fn render_table(report: &BenchmarkReport) -> String {
    let mut out = String::new();
    let mut inputs: Vec<(Task, FeatureView)> = report.cells.iter().map(|c| (c.task, c.view)).collect();
    inputs.sort();
    inputs.dedup();
    for (task, view) in inputs {
        let _ = writeln!(out, "{task} / {view}");
        let _ = writeln!(out, "{:<22} {:>8} {:>8}", "Method", "AUC", "Std");
        let rows: Vec<&CellReport> = report.cells.iter().filter(|c| c.task == task && c.view == view).collect();
        for group in [MethodGroup::Baseline, MethodGroup::NnBased, MethodGroup::Mimic] {
            let members: Vec<&&CellReport> = rows.iter().filter(|c| c.method.group() == group).collect();
            if members.is_empty() {
                continue;
            }
            let _ = writeln!(out, "{}", group.title());
            for c in members {
                match (&c.status, c.auc_mean, c.auc_std) {
                    (CellStatus::Ok, Some(m), Some(s)) => {
                        let _ = writeln!(out, "  {:<20} {m:>8.4} {s:>8.4}", c.method.id());
                    }
                    (CellStatus::Failed { message }, ..) => {
                        let _ = writeln!(out, "  {:<20} failed: {message}", c.method.id());
                    }
                    _ => {
                        let _ = writeln!(out, "  {:<20} -", c.method.id());
                    }
                }
            }
        }
        out.push('\n');
    }
    for kind in [
        DiffKind::AllMinusTemporalOnly,
        DiffKind::AllMinusStaticPlusDay0,
        DiffKind::TemporalOnlyMinusStaticPlusDay0,
        DiffKind::GbtMimicMinusDtMimic,
    ] {
        let entries: Vec<&DiffEntry> = report.diffs.iter().filter(|d| d.kind == kind).collect();
        if entries.is_empty() {
            continue;
        }
        let _ = writeln!(out, "AUC(diff): {}", kind.title());
        for d in entries {
            let label = match kind {
                DiffKind::GbtMimicMinusDtMimic => format!("{} / {}", d.left.method.id().replacen("GBTmimic-", "", 1), d.left.view),
                _ => d.left.method.id(),
            };
            let _ = writeln!(out, "  {:<5} {label:<32} {:>+8.4}", d.left.task.as_str(), d.auc_diff);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{impute_missing, synth_generate, SynthConfig};
    use crate::eval::BaselineKind;
    use alloc::vec;

    fn dataset(n: usize) -> Dataset {
        let cfg = SynthConfig { n_samples: n, seed: 11, ..SynthConfig::default() };
        impute_missing(&synth_generate(&cfg).unwrap()).unwrap()
    }

    fn fast() -> CvConfig {
        let mut cfg = CvConfig { trials: 2, folds: 3, ..CvConfig::default() };
        for t in [&mut cfg.methods.dnn, &mut cfg.methods.sda, &mut cfg.methods.lstm] {
            t.epochs = 2;
            t.hidden_multiplier = 1;
        }
        cfg.methods.gbt.n_stages = 10;
        cfg
    }

    const LR: MethodSpec = MethodSpec::Baseline(BaselineKind::Lr);
    const GBT: MethodSpec = MethodSpec::Baseline(BaselineKind::Gbt);

    #[test]
    fn one_cell_gives_one_row() {
        let ds = dataset(60);
        let out = run_benchmark(&ds, &[BenchCell::new(LR, FeatureView::All, Task::Mor)], &fast()).unwrap();
        assert_eq!(out.report.cells.len(), 1);
        assert!(out.report.diffs.is_empty());
        let c = &out.report.cells[0];
        assert_eq!(c.status, CellStatus::Ok);
        assert_eq!(c.fold_aucs.len() + c.skipped_folds.len(), 6);
        let table = render_table(&out.report);
        assert!(table.contains("Baseline\n  LR"), "{table}");
    }

    #[test]
    fn view_and_student_diffs_use_the_run_means() {
        let ds = dataset(60);
        let gm: MethodSpec = "GBTmimic-DNN".parse().unwrap();
        let dm: MethodSpec = "DTmimic-DNN".parse().unwrap();
        let mut cells = Vec::new();
        for view in FeatureView::ALL {
            cells.push(BenchCell::new(GBT, view, Task::Vfd));
        }
        cells.push(BenchCell::new(gm, FeatureView::All, Task::Vfd));
        cells.push(BenchCell::new(dm, FeatureView::All, Task::Vfd));
        let rep = run_benchmark(&ds, &cells, &fast()).unwrap().report;
        let mean = |i: usize| rep.cells[i].auc_mean.unwrap();
        let diff = |k| rep.diffs.iter().find(|d| d.kind == k).unwrap().auc_diff;
        assert_eq!(diff(DiffKind::AllMinusTemporalOnly), mean(0) - mean(1));
        assert_eq!(diff(DiffKind::AllMinusStaticPlusDay0), mean(0) - mean(2));
        assert_eq!(diff(DiffKind::TemporalOnlyMinusStaticPlusDay0), mean(1) - mean(2));
        assert_eq!(diff(DiffKind::GbtMimicMinusDtMimic), mean(3) - mean(4));
        // the mimic cells have no other views, so no view diffs for them
        assert_eq!(rep.diffs.len(), 4);
    }

    #[test]
    fn failed_cells_are_marked_and_others_finish() {
        let ds = dataset(45);
        let mut cfg = fast();
        cfg.methods.dnn.learning_rate = 1e300;
        cfg.methods.dnn.activation = crate::neural::Activation::Linear;
        let cells = [
            BenchCell::new("DNN".parse().unwrap(), FeatureView::All, Task::Mor),
            BenchCell::new(LR, FeatureView::All, Task::Mor),
        ];
        let out = run_benchmark(&ds, &cells, &cfg).unwrap();
        assert!(matches!(out.report.cells[0].status, CellStatus::Failed { .. }));
        assert_eq!(out.report.cells[0].auc_mean, None);
        assert_eq!(out.report.cells[1].status, CellStatus::Ok);
        assert!(out.runs[0].is_none() && out.runs[1].is_some());
        assert!(render_table(&out.report).contains("DNN"));
    }

    #[test]
    fn job_order_does_not_change_the_report() {
        let ds = dataset(45);
        let cells = vec![
            BenchCell::new(GBT, FeatureView::TemporalOnly, Task::Mor),
            BenchCell::new("DTmimic-SDA".parse().unwrap(), FeatureView::All, Task::Mor),
            BenchCell::new(LR, FeatureView::All, Task::Vfd),
        ];
        let plan = BenchPlan::new(&ds, &cells, &fast()).unwrap();
        let rev: Vec<(usize, FoldOutcome)> = plan.jobs().into_iter().rev().map(|(g, j)| (g, plan.run(g, j))).collect();
        let a = plan.finish(rev);
        let b = run_benchmark(&ds, &cells, &fast()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report.cells.iter().map(CellReport::cell).collect::<Vec<_>>(), cells);
    }

    #[test]
    fn duplicate_and_empty_matrices_are_rejected() {
        let ds = dataset(30);
        let c = BenchCell::new(LR, FeatureView::All, Task::Mor);
        assert!(matches!(run_benchmark(&ds, &[c, c], &fast()), Err(Error::InvalidConfig { field: "matrix", .. })));
        assert!(matches!(run_benchmark(&ds, &[], &fast()), Err(Error::InvalidConfig { field: "matrix", .. })));
    }

    #[test]
    fn full_matrix_covers_every_combination() {
        assert_eq!(BenchCell::full_matrix().len(), 22 * 3 * 2);
    }
}
