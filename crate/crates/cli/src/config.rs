//! Run configuration: one JSON document covering inputs, model, training,
//! evaluation and outputs. Command-line flags override the file, and the
//! fully resolved document is written back next to the results.

use std::path::{Path, PathBuf};

use geni_core::{GeniConfig, ScoreTransform, TrainConfig, WalkConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphSection,
    pub features: FeaturesSection,
    pub scores: ScoresSection,
    pub model: GeniConfig,
    pub train: TrainConfig,
    pub baseline: WalkConfig,
    pub eval: EvalSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub path: Option<PathBuf>,
    pub add_inverse_edges: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    /// Feature TSV. When absent, structural features of width
    /// `structural_dim` are generated from the graph.
    pub path: Option<PathBuf>,
    pub structural_dim: usize,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            path: None,
            structural_dim: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoresSection {
    /// Training scores (seed scores for ppr and har).
    pub path: Option<PathBuf>,
    /// Ground truth for baseline and predict reports.
    pub eval_path: Option<PathBuf>,
    pub transform: ScoreTransform,
}

impl Default for ScoresSection {
    fn default() -> Self {
        ScoresSection {
            path: None,
            eval_path: None,
            transform: ScoreTransform::Log1p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Cut-offs for out-of-domain NDCG.
    pub ks: Vec<usize>,
    pub folds: usize,
    pub parallel_folds: usize,
    /// One node name per line; enables out-of-domain NDCG over these nodes.
    pub candidates: Option<PathBuf>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            ks: geni_core::metrics::DEFAULT_OOD_KS.to_vec(),
            folds: 5,
            parallel_folds: 1,
            candidates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub checkpoint: String,
    pub history: String,
    pub config: String,
    pub report: String,
    pub scores: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("."),
            checkpoint: "model.ckpt".into(),
            history: "history.json".into(),
            config: "config.json".into(),
            report: "report.json".into(),
            scores: "scores.tsv".into(),
        }
    }
}

impl OutputSection {
    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: geni_core::GeniError| CliError::Usage(e.to_string());
        self.model.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        self.baseline.validate().map_err(usage)?;
        if self.eval.folds < 2 {
            return Err(CliError::Usage(format!(
                "cross-validation needs at least 2 folds, got {}",
                self.eval.folds
            )));
        }
        if self.eval.parallel_folds == 0 {
            return Err(CliError::Usage("parallel_folds must be at least 1".into()));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(CliError::Usage("eval.ks must be a non-empty list of positive cut-offs".into()));
        }
        if self.features.path.is_none() && self.features.structural_dim < 2 {
            return Err(CliError::Usage("features.structural_dim must be at least 2".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
