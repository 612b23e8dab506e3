//! Versioned JSON envelope for every model the tool writes.

use std::path::Path;

use mimic_core::data::{FeatureView, Task};
use mimic_core::distill::{MimicModel, TrainedTeacher};
use mimic_core::eval::{FoldJob, MethodSpec};
use mimic_core::linear::LinearModel;
use mimic_core::trees::{Tree, TreeModel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io;

pub const FORMAT: &str = "mimic-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearArtifact {
    pub method: MethodSpec,
    pub task: Task,
    pub view: FeatureView,
    pub feature_names: Vec<String>,
    pub model: LinearModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeArtifact {
    pub method: MethodSpec,
    pub task: Task,
    pub view: FeatureView,
    pub model: TreeModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralArtifact {
    pub method: MethodSpec,
    pub task: Task,
    pub view: FeatureView,
    pub feature_names: Vec<String>,
    pub teacher: TrainedTeacher,
    pub lr_head: Option<LinearModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicArtifact {
    pub method: MethodSpec,
    pub task: Task,
    pub view: FeatureView,
    pub model: MimicModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModel {
    pub trial: usize,
    pub fold: usize,
    pub model: TreeModel,
}

/// The tree models of every cross-validation fold of one benchmark cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModels {
    pub method: MethodSpec,
    pub task: Task,
    pub view: FeatureView,
    pub feature_names: Vec<String>,
    pub folds: Vec<FoldModel>,
}

impl FoldModels {
    pub fn new(method: MethodSpec, task: Task, view: FeatureView, models: &[(FoldJob, TreeModel)]) -> Self {
        FoldModels {
            method,
            task,
            view,
            feature_names: models.first().map(|(_, m)| m.feature_names().to_vec()).unwrap_or_default(),
            folds: models
                .iter()
                .map(|(job, m)| FoldModel {
                    trial: job.trial,
                    fold: job.fold,
                    model: m.clone(),
                })
                .collect(),
        }
    }

    pub fn models(&self) -> Vec<TreeModel> {
        self.folds.iter().map(|f| f.model.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoredModel {
    Linear(LinearArtifact),
    Tree(TreeArtifact),
    Neural(NeuralArtifact),
    Mimic(MimicArtifact),
    FoldModels(FoldModels),
}

impl StoredModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            StoredModel::Linear(_) => "linear",
            StoredModel::Tree(_) => "tree",
            StoredModel::Neural(_) => "neural",
            StoredModel::Mimic(_) => "mimic",
            StoredModel::FoldModels(_) => "fold_models",
        }
    }

    /// The tree model inside, if any. `fold` picks among fold models.
    pub fn tree_model(&self, fold: usize) -> CliResult<&TreeModel> {
        match self {
            StoredModel::Tree(t) => Ok(&t.model),
            StoredModel::Mimic(m) => Ok(&m.model.student),
            StoredModel::FoldModels(f) => f.folds.get(fold).map(|f| &f.model).ok_or_else(|| {
                CliError::validation("fold", format!("file holds {} fold models", f.folds.len()))
            }),
            other => Err(CliError::validation(
                "model",
                format!("a {} model has no trees", other.kind_name()),
            )),
        }
    }

    /// Tree `stage` of the tree model inside, named after its features.
    pub fn tree(&self, fold: usize, stage: usize) -> CliResult<&Tree> {
        Ok(self.tree_model(fold)?.tree_at(stage)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub model: StoredModel,
}

impl ModelFile {
    pub fn new(model: StoredModel) -> Self {
        ModelFile {
            format: FORMAT.to_string(),
            version: VERSION,
            model,
        }
    }
}

pub fn save_model(path: &Path, model: StoredModel) -> CliResult<()> {
    io::write_json(path, &ModelFile::new(model))
}

pub fn parse_model(text: &str) -> CliResult<StoredModel> {
    #[derive(Deserialize)]
    struct Head {
        format: String,
        version: u32,
    }
    let head: Head = io::parse_json(text)?;
    if head.format != FORMAT {
        return Err(CliError::validation("format", format!("expected `{FORMAT}`, found `{}`", head.format)));
    }
    if head.version != VERSION {
        return Err(CliError::validation("version", format!("unsupported version {}", head.version)));
    }
    Ok(io::parse_json::<ModelFile>(text)?.model)
}

pub fn load_model(path: &Path) -> CliResult<StoredModel> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mimic_core::linalg::Matrix;
    use mimic_core::trees::{gbt_fit, TreeConfig};

    fn gbt() -> TreeModel {
        let x = Matrix::from_rows(&[[0.1, 2.0], [0.7, 1.0], [0.3, 0.0], [0.9, 5.0], [0.5, 3.3]]).unwrap();
        let cfg = TreeConfig { n_stages: 7, ..TreeConfig::gbt() };
        TreeModel::Gbt(gbt_fit(&x, &[0.1, 0.35, 0.2, 0.95, 1.0 / 3.0], &cfg).unwrap())
            .with_feature_names(vec!["a".into(), "b".into()])
    }

    fn artifact() -> StoredModel {
        StoredModel::Tree(TreeArtifact {
            method: "GBT".parse().unwrap(),
            task: Task::Mor,
            view: FeatureView::All,
            model: gbt(),
        })
    }

    #[test]
    fn floats_survive_a_round_trip_bit_for_bit() {
        let text = io::to_json(&ModelFile::new(artifact())).unwrap();
        let back = parse_model(&text).unwrap();
        assert_eq!(back, artifact());
        let probe = [0.45, 2.5];
        assert_eq!(
            back.tree_model(0).unwrap().predict_row(&probe).to_bits(),
            gbt().predict_row(&probe).to_bits()
        );
    }

    #[test]
    fn envelope_is_checked() {
        let text = io::to_json(&ModelFile::new(artifact())).unwrap();
        assert!(text.contains("\"format\": \"mimic-model\"") && text.contains("\"kind\": \"tree\""));
        let wrong = text.replace("mimic-model", "other");
        assert!(matches!(parse_model(&wrong), Err(CliError::Validation { field, .. }) if field == "format"));
        let newer = text.replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(parse_model(&newer), Err(CliError::Validation { field, .. }) if field == "version"));
    }

    #[test]
    fn tree_lookup() {
        let m = artifact();
        assert!(m.tree(0, 6).is_ok());
        assert!(m.tree(0, 7).is_err());
        let folds = StoredModel::FoldModels(FoldModels::new(
            "GBT".parse().unwrap(),
            Task::Vfd,
            FeatureView::All,
            &[(FoldJob { trial: 0, fold: 1 }, gbt())],
        ));
        assert!(folds.tree(0, 0).is_ok());
        assert!(matches!(folds.tree(1, 0), Err(CliError::Validation { field, .. }) if field == "fold"));
    }
}
