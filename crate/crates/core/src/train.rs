//! Full-batch training with early stopping and the k-fold cross-validation
//! harness.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState, ParamStore, Tape};
use crate::error::{GeniError, Result};
use crate::folds::split_folds;
use crate::graph::NodeId;
use crate::metrics::{evaluate_in_domain, InDomainMetrics};
use crate::model::Geni;
use crate::scores::{ScoreTable, ScoreTransform};

/// Fewest labeled nodes [`train`] accepts.
pub const MIN_LABELED: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            weight_decay: 0.0005,
            max_epochs: 2000,
            patience: 50,
            val_fraction: 0.15,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(GeniError::invalid(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.patience == 0 {
            return Err(GeniError::invalid("patience must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(GeniError::invalid("max_epochs must be at least 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(GeniError::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(GeniError::invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps_adam > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(GeniError::invalid(
                "eps_adam must be positive and weight_decay non-negative",
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps_adam,
            weight_decay: self.weight_decay,
        }
    }
}

/// Per-epoch losses. Entry `e` is measured on the parameters before the
/// `e`-th optimizer step, so `val_loss[best_epoch]` is the validation loss of
/// the returned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch]
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best-validation epoch.
    pub params: ParamStore,
    pub history: TrainHistory,
    pub train_nodes: Vec<NodeId>,
    pub val_nodes: Vec<NodeId>,
}

/// Seeded train/validation split of the labeled nodes. The order of entries
/// in `labeled` does not matter.
pub fn split_train_val(labeled: &[NodeId], val_fraction: f64, seed: u64) -> (Vec<NodeId>, Vec<NodeId>) {
    let mut nodes = labeled.to_vec();
    nodes.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    nodes.shuffle(&mut rng);
    let n_val = ((val_fraction * nodes.len() as f64).round() as usize).clamp(1, nodes.len() - 1);
    let mut train = nodes.split_off(n_val);
    let mut val = nodes;
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Trains `model` on `scores` until validation loss has not strictly
/// improved for `patience` epochs or `max_epochs` is reached.
pub fn train(model: &Geni, scores: &ScoreTable, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let labeled = scores.nodes();
    if labeled.len() < MIN_LABELED {
        return Err(GeniError::invalid(format!(
            "training needs at least {MIN_LABELED} labeled nodes, got {}",
            labeled.len()
        )));
    }
    if let Some(n) = labeled.iter().find(|n| n.0 >= model.node_count()) {
        return Err(GeniError::NodeOutOfRange {
            id: n.0,
            node_count: model.node_count(),
        });
    }
    let (train_nodes, val_nodes) = split_train_val(&labeled, cfg.val_fraction, cfg.seed);
    let train_targets = scores.values_for(&train_nodes)?;
    let val_targets = scores.values_for(&val_nodes)?;

    let mut params = model.init_params(cfg.seed);
    let mut adam = AdamState::new(&params);
    let adam_cfg = cfg.adam();
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
    };
    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let fp = model.forward(&mut tape, &params)?;
        let loss = model.loss_on_tape(&mut tape, fp.output, &train_nodes, &train_targets)?;
        let val = model.loss_on_tape(&mut tape, fp.output, &val_nodes, &val_targets)?;
        let (train_loss, val_loss) = (tape.value(loss).item(), tape.value(val).item());
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(GeniError::TrainingDiverged {
                epoch,
                message: format!("loss became {train_loss} (validation {val_loss})"),
            });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        if val_loss < best_val {
            best_val = val_loss;
            best = params.clone();
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::info!(
                    "early stop at epoch {epoch}; best epoch {} with validation loss {best_val:.6}",
                    history.best_epoch
                );
                break;
            }
        }
        if epoch + 1 == cfg.max_epochs {
            break;
        }
        let grads = tape.backward(loss, &params)?;
        adam_step(&mut params, &grads, &mut adam, &adam_cfg).map_err(|e| match e {
            GeniError::NonFinite(message) => GeniError::TrainingDiverged { epoch, message },
            other => other,
        })?;
        if epoch % 100 == 0 {
            log::debug!("epoch {epoch}: train {train_loss:.6}, validation {val_loss:.6}");
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        train_nodes,
        val_nodes,
    })
}

/// Per-fold values of one metric with their mean and sample standard
/// deviation. Undefined fold values are `None` and skipped in the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_fold: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl MetricSummary {
    pub fn from_folds(per_fold: Vec<Option<f64>>) -> Self {
        let defined: Vec<f64> = per_fold.iter().flatten().copied().collect();
        let n = defined.len() as f64;
        let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / n);
        let std = match mean {
            Some(m) if defined.len() >= 2 => {
                Some((defined.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
            }
            _ => None,
        };
        MetricSummary {
            per_fold,
            mean,
            std,
        }
    }
}

/// Cross-validation report: `{metric: {per_fold, mean, std}}` plus the score
/// space the metrics were computed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub score_space: ScoreTransform,
    #[serde(flatten)]
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl EvalReport {
    pub fn from_folds(score_space: ScoreTransform, folds: &[InDomainMetrics]) -> Self {
        let collect = |f: fn(&InDomainMetrics) -> Option<f64>| {
            MetricSummary::from_folds(folds.iter().map(f).collect())
        };
        let mut metrics = BTreeMap::new();
        metrics.insert("ndcg@100".to_owned(), collect(|m| Some(m.ndcg_at_100)));
        metrics.insert("spearman".to_owned(), collect(|m| m.spearman));
        metrics.insert("rmse".to_owned(), collect(|m| Some(m.rmse)));
        EvalReport {
            score_space,
            metrics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvOptions {
    pub folds: usize,
    /// Number of folds trained concurrently; 1 runs them in order.
    pub parallel_folds: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 5,
            parallel_folds: 1,
        }
    }
}

/// Trains on k−1 folds and evaluates on the held-out one, for every fold.
/// Fold `f` trains with seed `cfg.seed + f`.
pub fn cross_validate(
    model: &Geni,
    scores: &ScoreTable,
    cfg: &TrainConfig,
    opts: CvOptions,
) -> Result<EvalReport> {
    cfg.validate()?;
    if opts.parallel_folds == 0 {
        return Err(GeniError::invalid("parallel_folds must be at least 1"));
    }
    let folds = split_folds(&scores.nodes(), opts.folds, cfg.seed)?;
    let run_fold = |f: usize| -> Result<InDomainMetrics> {
        let test = &folds[f];
        if test.is_empty() {
            return Err(GeniError::invalid(format!("fold {f} has no labeled nodes")));
        }
        let rest: Vec<NodeId> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, nodes)| nodes.iter().copied())
            .collect();
        let fold_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(f as u64),
            ..cfg.clone()
        };
        let outcome = train(model, &scores.subset(&rest), &fold_cfg)?;
        let predicted = model.final_scores(&outcome.params)?;
        let metrics = evaluate_in_domain(&predicted, &scores.subset(test))?;
        log::info!(
            "fold {f}: ndcg@100 {:.4}, spearman {:?}, rmse {:.4} ({} epochs)",
            metrics.ndcg_at_100,
            metrics.spearman,
            metrics.rmse,
            outcome.history.epochs()
        );
        Ok(metrics)
    };
    let results: Vec<Result<InDomainMetrics>> = if opts.parallel_folds == 1 {
        (0..folds.len()).map(run_fold).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.parallel_folds)
            .build()
            .map_err(|e| GeniError::invalid(format!("could not start fold workers: {e}")))?;
        pool.install(|| (0..folds.len()).into_par_iter().map(run_fold).collect())
    };
    let metrics = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_folds(scores.transform(), &metrics))
}
