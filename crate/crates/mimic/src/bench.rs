//! Parallel execution of a benchmark matrix.

use mimic_core::data::Dataset;
use mimic_core::eval::{BenchCell, BenchOutcome, BenchPlan, CvConfig};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::model_file::FoldModels;

/// Runs every (cell group, fold) job on a rayon pool of `threads` workers
/// (0 = rayon's default). The outcome equals the sequential
/// [`mimic_core::eval::run_benchmark`] bit for bit.
pub fn run_parallel(ds: &Dataset, cells: &[BenchCell], cfg: &CvConfig, threads: usize) -> CliResult<BenchOutcome> {
    let plan = BenchPlan::new(ds, cells, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let outcomes = pool.install(|| {
        plan.jobs()
            .into_par_iter()
            .map(|(g, job)| (g, plan.run(g, job)))
            .collect()
    });
    Ok(plan.finish(outcomes))
}

/// Fold models of every successful cell that produced trees.
pub fn fold_models(outcome: &BenchOutcome) -> Vec<FoldModels> {
    outcome
        .report
        .cells
        .iter()
        .zip(&outcome.runs)
        .filter_map(|(cell, run)| {
            let run = run.as_ref()?;
            (!run.models.is_empty()).then(|| FoldModels::new(cell.method, cell.task, cell.view, &run.models))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use mimic_core::data::{impute_missing, synth_generate, FeatureView, SynthConfig, Task};
    use mimic_core::eval::{run_benchmark, MethodSpec};

    #[test]
    fn parallel_matches_sequential() {
        let ds = impute_missing(&synth_generate(&SynthConfig { n_samples: 50, ..SynthConfig::default() }).unwrap()).unwrap();
        let mut cfg = CvConfig { trials: 2, folds: 3, ..CvConfig::default() };
        cfg.methods.dnn.epochs = 2;
        cfg.methods.gbt.n_stages = 5;
        let cells: Vec<BenchCell> = ["GBT", "DNN", "GBTmimic-LR-DNN", "DTmimic-DNN"]
            .iter()
            .flat_map(|m| {
                let m: MethodSpec = m.parse().unwrap();
                [BenchCell::new(m, FeatureView::All, Task::Mor), BenchCell::new(m, FeatureView::StaticPlusDay0, Task::Vfd)]
            })
            .collect();
        let seq = run_benchmark(&ds, &cells, &cfg).unwrap();
        let par = run_parallel(&ds, &cells, &cfg, 3).unwrap();
        assert_eq!(seq, par);
        let files = fold_models(&par);
        assert_eq!(files.len(), 6);
        assert!(files.iter().all(|f| f.folds.len() == 6 && !f.feature_names.is_empty()));
    }
}
