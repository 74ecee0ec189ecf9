//! Reference implementations shared by integration tests. They read the graph
//! through its public adjacency and parameters by name, and never touch the
//! model's attention plan or the autodiff tape.

#![allow(dead_code)]

use geni_core::autodiff::ParamStore;
use geni_core::{FeatureMatrix, GeniConfig, KnowledgeGraph, NodeId};

fn param<'p>(params: &'p ParamStore, name: &str) -> &'p [f64] {
    params
        .by_name(name)
        .unwrap_or_else(|| panic!("missing parameter {name}"))
        .data()
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

/// Scoring network of head `h` applied to one feature row.
pub fn scoring(params: &ParamStore, config: &GeniConfig, h: usize, z: &[f64]) -> f64 {
    let hidden = config.hidden_sizes(z.len());
    let mut widths = vec![z.len()];
    widths.extend(&hidden);
    widths.push(1);
    let mut x = z.to_vec();
    for k in 0..widths.len() - 1 {
        let (n_in, n_out) = (widths[k], widths[k + 1]);
        let w = param(params, &format!("scoring.{h}.w{k}"));
        let b = param(params, &format!("scoring.{h}.b{k}"));
        let mut y = vec![0.0; n_out];
        for (u, yu) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for t in 0..n_in {
                acc += x[t] * w[t * n_out + u];
            }
            *yu = acc + b[u];
            if k + 2 < widths.len() && *yu <= 0.0 {
                *yu = 0.0;
            }
        }
        x = y;
    }
    x[0]
}

/// Candidates of node `i`: itself first (with the embedding rows of the self
/// term and every self-loop), then each out-neighbor in ascending id order
/// with the rows of its parallel edges.
pub fn candidates(graph: &KnowledgeGraph, shared: bool, i: NodeId) -> Vec<(usize, Vec<usize>)> {
    let row = |p: usize| if shared { 0 } else { p };
    let mut self_rows = vec![row(graph.predicate_count())];
    let mut out = Vec::new();
    for (j, preds) in graph.out_neighbors(i).unwrap() {
        let rows: Vec<usize> = preds.iter().map(|p| row(p.0)).collect();
        if *j == i {
            self_rows.extend(rows);
        } else {
            out.push((j.0, rows));
        }
    }
    let mut all = vec![(i.0, self_rows)];
    all.extend(out);
    all
}

/// One attention head: per-node coefficients over `candidates` and the
/// aggregated scores.
pub fn head(
    graph: &KnowledgeGraph,
    params: &ParamStore,
    config: &GeniConfig,
    layer: usize,
    h: usize,
    s: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = config.predicate_embedding_dim;
    let a = param(params, &format!("attention.{layer}.{h}"));
    let phi = param(params, "predicate_embedding");
    let pred_term = |r: usize| {
        let mut acc = 0.0;
        for k in 0..d {
            acc += phi[r * d + k] * a[1 + k];
        }
        acc
    };
    let mut alphas = Vec::new();
    let mut agg = Vec::new();
    for i in graph.nodes() {
        let cands = candidates(graph, config.shared_predicate_embedding, i);
        let logits: Vec<f64> = cands
            .iter()
            .map(|(j, rows)| {
                let terms: Vec<f64> = rows
                    .iter()
                    .map(|&r| a[0] * s[i.0] + pred_term(r) + a[d + 1] * s[*j])
                    .collect();
                leaky(terms.iter().sum())
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let mut total = 0.0;
        for v in &e {
            total += v;
        }
        for v in &mut e {
            *v /= total;
        }
        let weighted: Vec<f64> = cands.iter().zip(&e).map(|((j, _), w)| w * s[*j]).collect();
        agg.push(weighted.iter().sum());
        alphas.push(e);
    }
    (alphas, agg)
}

fn mean(xs: &[Vec<f64>]) -> Vec<f64> {
    let n = xs[0].len();
    (0..n)
        .map(|i| {
            let mut acc = xs[0][i];
            for x in &xs[1..] {
                acc += x[i];
            }
            acc * (1.0 / xs.len() as f64)
        })
        .collect()
}

/// Full forward pass of the multi-layer, multi-head model.
pub fn forward(
    graph: &KnowledgeGraph,
    features: &FeatureMatrix,
    params: &ParamStore,
    config: &GeniConfig,
) -> Vec<f64> {
    let n = graph.node_count();
    let mut inputs: Vec<Vec<f64>> = (0..config.heads_per_layer[0])
        .map(|h| (0..n).map(|i| scoring(params, config, h, features.row(NodeId(i)))).collect())
        .collect();
    let mut last = Vec::new();
    for (l, &heads) in config.heads_per_layer.iter().enumerate() {
        let outs: Vec<Vec<f64>> = (0..heads)
            .map(|h| head(graph, params, config, l, h, &inputs[h]).1)
            .collect();
        if l + 1 < config.heads_per_layer.len() {
            let avg = mean(&outs);
            inputs = vec![avg; config.heads_per_layer[l + 1]];
        }
        last = outs;
    }
    let adjusted: Vec<Vec<f64>> = last
        .iter()
        .enumerate()
        .map(|(h, s)| {
            let gamma = param(params, &format!("ca.{h}.gamma"))[0];
            let beta = param(params, &format!("ca.{h}.beta"))[0];
            (0..n)
                .map(|i| {
                    let c = (graph.in_degree(NodeId(i)) as f64 + config.epsilon_centrality).ln();
                    let factor = if config.flexible_ca { gamma * c + beta } else { c };
                    factor * s[i]
                })
                .collect()
        })
        .collect();
    mean(&adjusted)
        .into_iter()
        .map(|v| if v > 0.0 { v } else { 0.0 })
        .collect()
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= m[r][c] * x[c];
        }
        x[r] = acc / m[r][r];
    }
    x
}

/// Personalized PageRank by solving `(I − d·Pᵀ) x = (1−d)·v`, where sinks
/// jump according to `v`.
pub fn dense_ppr(graph: &KnowledgeGraph, v: &[f64], d: f64) -> Vec<f64> {
    let n = graph.node_count();
    let mut p = vec![vec![0.0; n]; n];
    for (s, _, o) in graph.edges() {
        p[s.0][o.0] += 1.0;
    }
    for row in p.iter_mut() {
        let out: f64 = row.iter().sum();
        if out == 0.0 {
            row.copy_from_slice(v);
        } else {
            row.iter_mut().for_each(|x| *x /= out);
        }
    }
    let m: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| if r == c { 1.0 } else { 0.0 } - d * p[c][r])
                .collect()
        })
        .collect();
    solve(m, v.iter().map(|x| (1.0 - d) * x).collect())
}
