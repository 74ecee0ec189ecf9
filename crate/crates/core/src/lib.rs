//! Node importance estimation on knowledge graphs.
//!
//! Loading and feature handling live in [`graph`], [`features`] and
//! [`scores`]; the attention model in [`model`]; training, cross-validation
//! and checkpoints in [`train`] and [`checkpoint`]; comparison methods in
//! [`baselines`]; ranking metrics in [`metrics`].

pub mod autodiff;
pub mod baselines;
pub mod checkpoint;
pub mod error;
pub mod features;
pub mod folds;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod scores;
pub mod synthetic;
pub mod train;

pub use baselines::{BaselineMethod, WalkConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use error::{GeniError, Result};
pub use features::{generate_structural_features, load_features, FeatureMatrix};
pub use graph::{load_graph, KnowledgeGraph, LoadOptions, NodeId, PredicateId};
pub use metrics::{evaluate_in_domain, evaluate_out_of_domain, InDomainMetrics};
pub use model::{Geni, GeniConfig};
pub use scores::{load_scores, write_scores, ScoreTable, ScoreTransform};
pub use train::{cross_validate, train, CvOptions, EvalReport, TrainConfig, TrainHistory, TrainOutcome};
