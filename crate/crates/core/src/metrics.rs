//! Ranking and regression metrics.
//!
//! Predictions are dense per-node vectors indexed by [`NodeId`]. Ground truth
//! is a [`ScoreTable`] in the training score space. Rankings sort by
//! descending predicted score and break ties by ascending node id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GeniError, Result};
use crate::graph::NodeId;
use crate::scores::ScoreTable;

/// Cutoffs used for out-of-domain evaluation unless told otherwise.
pub const DEFAULT_OOD_KS: [usize; 2] = [100, 2000];
pub const IN_DOMAIN_K: usize = 100;

fn check_predicted(predicted: &[f64], nodes: &[NodeId]) -> Result<()> {
    for &n in nodes {
        match predicted.get(n.0) {
            None => {
                return Err(GeniError::NodeOutOfRange {
                    id: n.0,
                    node_count: predicted.len(),
                })
            }
            Some(v) if !v.is_finite() => {
                return Err(GeniError::NonFinite(format!("prediction for node {n} is {v}")))
            }
            _ => {}
        }
    }
    Ok(())
}

/// `nodes` ordered by descending `predicted` score, ties by ascending id.
pub fn rank_nodes(predicted: &[f64], nodes: &[NodeId]) -> Result<Vec<NodeId>> {
    check_predicted(predicted, nodes)?;
    let mut ranked = nodes.to_vec();
    ranked.sort_by(|a, b| predicted[b.0].total_cmp(&predicted[a.0]).then(a.cmp(b)));
    Ok(ranked)
}

/// `Σ_{pos < k} rel[pos] / log2(pos + 2)` with 0-based positions.
pub fn dcg_at_k(relevance_in_rank_order: &[f64], k: usize) -> f64 {
    relevance_in_rank_order
        .iter()
        .take(k)
        .enumerate()
        .map(|(pos, r)| r / ((pos + 2) as f64).log2())
        .sum()
}

/// NDCG@k of ranking `nodes` by `predicted`, with `relevance` giving each
/// node's graded relevance. Uses all nodes when fewer than `k` exist.
pub fn ndcg_with_relevance(
    predicted: &[f64],
    nodes: &[NodeId],
    relevance: impl Fn(NodeId) -> f64,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(GeniError::invalid("NDCG cutoff k must be at least 1"));
    }
    let ranked = rank_nodes(predicted, nodes)?;
    let gains: Vec<f64> = ranked.iter().map(|&n| relevance(n)).collect();
    if let Some(bad) = gains.iter().find(|g| !g.is_finite() || **g < 0.0) {
        return Err(GeniError::invalid(format!("relevance must be finite and non-negative, got {bad}")));
    }
    let mut ideal = gains.clone();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg_at_k(&ideal, k);
    if idcg <= 0.0 {
        return Err(GeniError::UndefinedMetric(
            "NDCG is undefined when every relevance is zero".into(),
        ));
    }
    Ok(dcg_at_k(&gains, k) / idcg)
}

/// NDCG@k over the nodes listed in `truth`.
pub fn ndcg_at_k(predicted: &[f64], truth: &ScoreTable, k: usize) -> Result<f64> {
    let nodes = truth.nodes();
    ndcg_with_relevance(predicted, &nodes, |n| truth.get(n).unwrap_or(0.0), k)
}

/// Fractional ranks (1-based); tied values share the mean of their positions.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation; undefined when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(GeniError::Shape("correlation inputs differ in length".into()));
    }
    if x.len() < 2 {
        return Err(GeniError::UndefinedMetric(
            "correlation needs at least two values".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(GeniError::UndefinedMetric(
            "correlation is undefined for a constant vector".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation between `a` and `b` (Pearson on fractional ranks).
pub fn spearman_values(a: &[f64], b: &[f64]) -> Result<f64> {
    pearson(&fractional_ranks(a), &fractional_ranks(b))
}

/// Spearman correlation of predictions against truth over `eval_nodes`.
pub fn spearman(predicted: &[f64], truth: &ScoreTable, eval_nodes: &[NodeId]) -> Result<f64> {
    check_predicted(predicted, eval_nodes)?;
    let pred: Vec<f64> = eval_nodes.iter().map(|n| predicted[n.0]).collect();
    spearman_values(&pred, &truth.values_for(eval_nodes)?)
}

pub fn rmse(predicted: &[f64], truth: &ScoreTable, eval_nodes: &[NodeId]) -> Result<f64> {
    if eval_nodes.is_empty() {
        return Err(GeniError::invalid("RMSE over an empty node set"));
    }
    check_predicted(predicted, eval_nodes)?;
    let targets = truth.values_for(eval_nodes)?;
    let sq: f64 = eval_nodes
        .iter()
        .zip(&targets)
        .map(|(n, t)| (predicted[n.0] - t).powi(2))
        .sum();
    Ok((sq / eval_nodes.len() as f64).sqrt())
}

/// In-domain metrics on held-out labeled nodes. `spearman` is `None` when the
/// correlation is undefined (a constant side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InDomainMetrics {
    #[serde(rename = "ndcg@100")]
    pub ndcg_at_100: f64,
    pub spearman: Option<f64>,
    pub rmse: f64,
}

pub fn evaluate_in_domain(predicted: &[f64], truth_test: &ScoreTable) -> Result<InDomainMetrics> {
    let nodes = truth_test.nodes();
    if nodes.is_empty() {
        return Err(GeniError::invalid("no test nodes to evaluate"));
    }
    let spearman = match spearman(predicted, truth_test, &nodes) {
        Ok(v) => Some(v),
        Err(GeniError::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(InDomainMetrics {
        ndcg_at_100: ndcg_at_k(predicted, truth_test, IN_DOMAIN_K)?,
        spearman,
        rmse: rmse(predicted, truth_test, &nodes)?,
    })
}

/// NDCG@k for each k over the candidate nodes. Candidates missing from
/// `ood_truth` have relevance 0. Every truth-listed node must be a candidate.
pub fn evaluate_out_of_domain(
    predicted: &[f64],
    ood_truth: &ScoreTable,
    candidates: &[NodeId],
    ks: &[usize],
) -> Result<BTreeMap<String, f64>> {
    if candidates.is_empty() {
        return Err(GeniError::invalid("candidate list is empty"));
    }
    if ood_truth.is_empty() {
        return Err(GeniError::invalid("out-of-domain truth is empty"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(GeniError::invalid("candidate list contains duplicates"));
    }
    let outside: Vec<String> = ood_truth
        .nodes()
        .into_iter()
        .filter(|n| sorted.binary_search(n).is_err())
        .map(|n| n.to_string())
        .collect();
    if !outside.is_empty() {
        return Err(GeniError::invalid(format!(
            "truth-listed nodes are not candidates: {}",
            outside.join(", ")
        )));
    }
    ks.iter()
        .map(|&k| {
            let v = ndcg_with_relevance(predicted, candidates, |n| ood_truth.get(n).unwrap_or(0.0), k)?;
            Ok((format!("ndcg@{k}"), v))
        })
        .collect()
}
