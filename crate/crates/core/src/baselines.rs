//! Non-trainable importance estimators: PageRank, personalized PageRank,
//! HAR and log in-degree.
//!
//! PageRank variants collapse predicates and weight parallel edges by their
//! multiplicity. HAR keeps predicates apart.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{GeniError, Result};
use crate::graph::{KnowledgeGraph, NodeId};
use crate::scores::ScoreTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub har_alpha: f64,
    pub har_beta: f64,
    pub har_gamma: f64,
    pub har_iters: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 100,
            har_alpha: 0.15,
            har_beta: 0.15,
            har_gamma: 0.0,
            har_iters: 30,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(GeniError::invalid(format!(
                "damping must lie in (0, 1), got {}",
                self.damping
            )));
        }
        if !(self.tol > 0.0) {
            return Err(GeniError::invalid("tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(GeniError::invalid("max_iter must be at least 1"));
        }
        for (name, v) in [
            ("har_alpha", self.har_alpha),
            ("har_beta", self.har_beta),
            ("har_gamma", self.har_gamma),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GeniError::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Seed scores normalized to a distribution over all nodes.
fn teleport(graph: &KnowledgeGraph, seeds: &ScoreTable) -> Result<Vec<f64>> {
    let mut v = vec![0.0; graph.node_count()];
    for (node, s) in seeds.iter() {
        if node.0 >= v.len() {
            return Err(GeniError::NodeOutOfRange {
                id: node.0,
                node_count: v.len(),
            });
        }
        v[node.0] = s;
    }
    let total: f64 = v.iter().sum();
    if !(total > 0.0) {
        return Err(GeniError::invalid("seed scores must contain a positive value"));
    }
    for x in &mut v {
        *x /= total;
    }
    Ok(v)
}

/// Power iteration `x ← (1−d)·v + d·(Mx + dangling·v)`.
fn walk(graph: &KnowledgeGraph, v: &[f64], cfg: &WalkConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = graph.node_count();
    if n == 0 {
        return Err(GeniError::invalid("graph has no nodes"));
    }
    let d = cfg.damping;
    let mut x = v.to_vec();
    let mut next = vec![0.0; n];
    let mut converged = false;
    for iter in 0..cfg.max_iter {
        let mut dangling = 0.0;
        next.iter_mut().for_each(|y| *y = 0.0);
        for i in graph.nodes() {
            let out = graph.out_degree(i);
            if out == 0 {
                dangling += x[i.0];
                continue;
            }
            let share = x[i.0] / out as f64;
            for (j, preds) in graph.out_neighbors(i)? {
                next[j.0] += share * preds.len() as f64;
            }
        }
        for (y, vi) in next.iter_mut().zip(v) {
            *y = (1.0 - d) * vi + d * (*y + dangling * vi);
        }
        let change: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if change < cfg.tol {
            log::debug!("walk converged after {} iterations", iter + 1);
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "random walk stopped at max_iter = {} before reaching tol = {:e}",
            cfg.max_iter,
            cfg.tol
        );
    }
    let total: f64 = x.iter().sum();
    Ok(x.into_iter().map(|p| p / total).collect())
}

/// Stationary distribution of the damped random surfer. Dangling nodes jump
/// uniformly.
pub fn pagerank(graph: &KnowledgeGraph, cfg: &WalkConfig) -> Result<Vec<f64>> {
    let n = graph.node_count();
    walk(graph, &vec![1.0 / n.max(1) as f64; n], cfg)
}

/// PageRank teleporting to the normalized `seeds`. Dangling nodes jump to the
/// same distribution.
pub fn personalized_pagerank(
    graph: &KnowledgeGraph,
    seeds: &ScoreTable,
    cfg: &WalkConfig,
) -> Result<Vec<f64>> {
    let v = teleport(graph, seeds)?;
    walk(graph, &v, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarScores {
    pub authority: Vec<f64>,
    pub hub: Vec<f64>,
    /// One entry per predicate.
    pub relation: Vec<f64>,
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
    v
}

fn mix(weight: f64, contraction: Vec<f64>, base: &[f64]) -> Vec<f64> {
    let c = normalized(contraction);
    c.iter()
        .zip(base)
        .map(|(c, b)| weight * c + (1.0 - weight) * b)
        .collect()
}

/// Hub, authority and relation scores on the multi-relational adjacency
/// tensor `a[i1][i2][j]` = number of edges `i2 -j-> i1`.
///
/// Each sweep (Jacobi style, all from the previous vectors):
///
/// ```text
/// x ← α·O ×₂ y ×₃ z + (1−α)·x₀
/// y ← β·H ×₁ x ×₃ z + (1−β)·y₀
/// z ← γ·R ×₁ x ×₂ y + (1−γ)·z₀
/// ```
///
/// `O`, `H`, `R` normalize `a` over `i1`, `i2` and `j` respectively; empty
/// fibers become uniform. `x₀ = y₀` are the normalized seeds and `z₀` is
/// uniform. Contractions are renormalized to sum 1 before mixing.
pub fn har(graph: &KnowledgeGraph, seeds: &ScoreTable, cfg: &WalkConfig) -> Result<HarScores> {
    cfg.validate()?;
    let n = graph.node_count();
    let m = graph.predicate_count();
    if m == 0 {
        return Err(GeniError::invalid("HAR needs at least one predicate"));
    }
    let x0 = teleport(graph, seeds)?;
    let y0 = x0.clone();
    let z0 = vec![1.0 / m as f64; m];

    // (dst, src, pred) -> multiplicity
    let mut entries: HashMap<(usize, usize, usize), f64> = HashMap::new();
    for (s, p, o) in graph.edges() {
        *entries.entry((o.0, s.0, p.0)).or_default() += 1.0;
    }
    let mut entries: Vec<((usize, usize, usize), f64)> = entries.into_iter().collect();
    entries.sort_unstable_by_key(|e| e.0);
    let mut out_fiber: HashMap<(usize, usize), f64> = HashMap::new();
    let mut in_fiber: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pair_fiber: HashMap<(usize, usize), f64> = HashMap::new();
    for &((i1, i2, j), c) in &entries {
        *out_fiber.entry((i2, j)).or_default() += c;
        *in_fiber.entry((i1, j)).or_default() += c;
        *pair_fiber.entry((i1, i2)).or_default() += c;
    }
    let mut out_keys: Vec<_> = out_fiber.keys().copied().collect();
    out_keys.sort_unstable();
    let mut in_keys: Vec<_> = in_fiber.keys().copied().collect();
    in_keys.sort_unstable();
    let mut pair_keys: Vec<_> = pair_fiber.keys().copied().collect();
    pair_keys.sort_unstable();

    let (mut x, mut y, mut z) = (x0.clone(), y0.clone(), z0.clone());
    for _ in 0..cfg.har_iters {
        let (sx, sy, sz) = (x.iter().sum::<f64>(), y.iter().sum::<f64>(), z.iter().sum::<f64>());

        let mut cx = vec![0.0; n];
        let mut cy = vec![0.0; n];
        let mut cz = vec![0.0; m];
        for &((i1, i2, j), c) in &entries {
            cx[i1] += c / out_fiber[&(i2, j)] * y[i2] * z[j];
            cy[i2] += c / in_fiber[&(i1, j)] * x[i1] * z[j];
            cz[j] += c / pair_fiber[&(i1, i2)] * x[i1] * y[i2];
        }
        let covered_x: f64 = out_keys.iter().map(|&(i2, j)| y[i2] * z[j]).sum();
        let covered_y: f64 = in_keys.iter().map(|&(i1, j)| x[i1] * z[j]).sum();
        let covered_z: f64 = pair_keys.iter().map(|&(i1, i2)| x[i1] * y[i2]).sum();
        let ux = (sy * sz - covered_x).max(0.0) / n as f64;
        let uy = (sx * sz - covered_y).max(0.0) / n as f64;
        let uz = (sx * sy - covered_z).max(0.0) / m as f64;
        cx.iter_mut().for_each(|v| *v += ux);
        cy.iter_mut().for_each(|v| *v += uy);
        cz.iter_mut().for_each(|v| *v += uz);

        x = mix(cfg.har_alpha, cx, &x0);
        y = mix(cfg.har_beta, cy, &y0);
        z = mix(cfg.har_gamma, cz, &z0);
    }
    Ok(HarScores {
        authority: x,
        hub: y,
        relation: z,
    })
}

/// `ln(1 + in_degree)` per node.
pub fn log_in_degree(graph: &KnowledgeGraph) -> Vec<f64> {
    graph
        .nodes()
        .map(|i| (graph.in_degree(i) as f64).ln_1p())
        .collect()
}

/// Baselines selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Pr,
    Ppr,
    Har,
    Lid,
}

impl BaselineMethod {
    pub fn needs_seeds(self) -> bool {
        matches!(self, BaselineMethod::Ppr | BaselineMethod::Har)
    }
}

impl std::fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BaselineMethod::Pr => "pr",
            BaselineMethod::Ppr => "ppr",
            BaselineMethod::Har => "har",
            BaselineMethod::Lid => "lid",
        })
    }
}

impl std::str::FromStr for BaselineMethod {
    type Err = GeniError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pr" => Ok(BaselineMethod::Pr),
            "ppr" => Ok(BaselineMethod::Ppr),
            "har" => Ok(BaselineMethod::Har),
            "lid" => Ok(BaselineMethod::Lid),
            other => Err(GeniError::invalid(format!(
                "unknown baseline method `{other}` (expected pr, ppr, har or lid)"
            ))),
        }
    }
}

/// Per-node scores of `method`. HAR reports its authority vector.
pub fn run_baseline(
    method: BaselineMethod,
    graph: &KnowledgeGraph,
    seeds: Option<&ScoreTable>,
    cfg: &WalkConfig,
) -> Result<Vec<f64>> {
    let seeds = || {
        seeds.ok_or_else(|| GeniError::invalid(format!("{method} needs seed scores")))
    };
    match method {
        BaselineMethod::Pr => pagerank(graph, cfg),
        BaselineMethod::Ppr => personalized_pagerank(graph, seeds()?, cfg),
        BaselineMethod::Har => Ok(har(graph, seeds()?, cfg)?.authority),
        BaselineMethod::Lid => Ok(log_in_degree(graph)),
    }
}

/// Nodes sorted by descending score; convenience for reports.
pub fn top_nodes(scores: &[f64], k: usize) -> Vec<NodeId> {
    let mut ids: Vec<NodeId> = (0..scores.len()).map(NodeId).collect();
    ids.sort_by(|a, b| scores[b.0].total_cmp(&scores[a.0]).then(a.cmp(b)));
    ids.truncate(k);
    ids
}
