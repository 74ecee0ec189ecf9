//! Attentive score aggregation with centrality adjustment.
//!
//! Each head of the first layer owns a scoring network mapping node features
//! to an initial scalar score. A score aggregation (SA) head replaces a node's
//! score by an attention-weighted sum over the node itself and its
//! out-neighbors. The attention logit of the pair `(i, j)` is
//!
//! ```text
//! leaky_relu( Σ_m aᵀ [ s(i) ‖ φ(p_ij^m) ‖ s(j) ] )
//! ```
//!
//! summed over the parallel edges `m` from `i` to `j`, where `φ` is a
//! predicate embedding table shared by all layers and heads. Head outputs of a
//! layer are averaged before feeding the next layer. The final layer's heads
//! are multiplied by a centrality `γ_h · ln(in_degree + ε) + β_h`, averaged and
//! passed through a ReLU.
//!
//! Layers are indexed from 0 throughout this module.

mod config;
mod plan;

use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{GeniConfig, ATTENTION_NEGATIVE_SLOPE};
use plan::AttentionPlan;

use crate::autodiff::{NodeRef, ParamId, ParamStore, Tape, Tensor};
use crate::error::{GeniError, Result};
use crate::features::FeatureMatrix;
use crate::graph::{KnowledgeGraph, NodeId};
use crate::scores::ScoreTable;

/// `ln(in_degree(i) + ε)`.
pub fn centrality(graph: &KnowledgeGraph, i: NodeId, epsilon: f64) -> f64 {
    (graph.in_degree(i) as f64 + epsilon).ln()
}

#[derive(Debug, Clone)]
struct ScoringLayout {
    /// `(weight, bias)` per dense layer, input to output.
    layers: Vec<(ParamId, ParamId)>,
}

#[derive(Debug, Clone)]
struct Layout {
    scoring: Vec<ScoringLayout>,
    embedding: ParamId,
    attention: Vec<Vec<ParamId>>,
    gamma: Vec<ParamId>,
    beta: Vec<ParamId>,
    /// `(name, rows, cols)` in declaration order.
    shapes: Vec<(String, usize, usize)>,
}

/// A model bound to one graph and its feature matrix.
#[derive(Debug, Clone)]
pub struct Geni {
    config: GeniConfig,
    node_count: usize,
    feature_dim: usize,
    embedding_rows: usize,
    features: Tensor,
    centrality: Tensor,
    plan: AttentionPlan,
    layout: Layout,
}

/// Tape handles produced by [`Geni::forward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Final non-negative estimates, one per node.
    pub output: NodeRef,
    /// Scoring-network outputs, one per first-layer head.
    pub initial: Vec<NodeRef>,
    /// Attention coefficients per layer and head, laid out by candidate pair.
    pub attention: Vec<Vec<NodeRef>>,
    /// Aggregated scores per layer and head.
    pub aggregated: Vec<Vec<NodeRef>>,
    /// Head-averaged scores per layer.
    pub averaged: Vec<NodeRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    /// For each node, its candidates (self first) with attention weights.
    pub attention: Vec<Vec<(NodeId, f64)>>,
    pub aggregated: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub heads: Vec<HeadTrace>,
    pub averaged: Vec<f64>,
}

/// Plain values of every intermediate of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub initial_scores: Vec<Vec<f64>>,
    pub layers: Vec<LayerTrace>,
    pub final_scores: Vec<f64>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    Tensor::new(rows, cols, (0..rows * cols).map(|_| dist.sample(rng)).collect())
}

impl Geni {
    pub fn new(config: GeniConfig, graph: &KnowledgeGraph, features: &FeatureMatrix) -> Result<Self> {
        config.validate()?;
        let n = graph.node_count();
        if features.rows() != n {
            return Err(GeniError::Shape(format!(
                "feature matrix has {} rows, graph has {n} nodes",
                features.rows()
            )));
        }
        let feature_dim = features.dim();
        let embedding_rows = if config.shared_predicate_embedding {
            1
        } else {
            graph.predicate_count() + 1
        };
        let centrality = Tensor::vector(
            graph
                .nodes()
                .map(|i| centrality(graph, i, config.epsilon_centrality))
                .collect(),
        );
        let layout = Self::build_layout(&config, feature_dim, embedding_rows);
        Ok(Geni {
            plan: AttentionPlan::new(graph, config.shared_predicate_embedding),
            features: Tensor::new(n, feature_dim, features.as_slice().to_vec()),
            config,
            node_count: n,
            feature_dim,
            embedding_rows,
            centrality,
            layout,
        })
    }

    fn build_layout(config: &GeniConfig, feature_dim: usize, embedding_rows: usize) -> Layout {
        let mut shapes = Vec::new();
        let mut next = |name: String, rows: usize, cols: usize| {
            shapes.push((name, rows, cols));
            ParamId(shapes.len() - 1)
        };
        let mut widths = vec![feature_dim];
        widths.extend(config.hidden_sizes(feature_dim));
        widths.push(1);
        let scoring = (0..config.heads_per_layer[0])
            .map(|h| ScoringLayout {
                layers: widths
                    .windows(2)
                    .enumerate()
                    .map(|(k, w)| {
                        let weight = next(format!("scoring.{h}.w{k}"), w[0], w[1]);
                        let bias = next(format!("scoring.{h}.b{k}"), w[1], 1);
                        (weight, bias)
                    })
                    .collect(),
            })
            .collect();
        let d = config.predicate_embedding_dim;
        let embedding = next("predicate_embedding".into(), embedding_rows, d);
        let attention = config
            .heads_per_layer
            .iter()
            .enumerate()
            .map(|(l, &heads)| {
                (0..heads)
                    .map(|h| next(format!("attention.{l}.{h}"), d + 2, 1))
                    .collect()
            })
            .collect();
        let mut gamma = Vec::new();
        let mut beta = Vec::new();
        for h in 0..config.final_heads() {
            gamma.push(next(format!("ca.{h}.gamma"), 1, 1));
            beta.push(next(format!("ca.{h}.beta"), 1, 1));
        }
        Layout {
            scoring,
            embedding,
            attention,
            gamma,
            beta,
            shapes,
        }
    }

    pub fn config(&self) -> &GeniConfig {
        &self.config
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn embedding_rows(&self) -> usize {
        self.embedding_rows
    }

    /// Centrality values used by the final adjustment.
    pub fn centralities(&self) -> &[f64] {
        self.centrality.data()
    }

    /// Parameter names and shapes in declaration order.
    pub fn param_shapes(&self) -> impl Iterator<Item = (&str, usize, usize)> {
        self.layout.shapes.iter().map(|(n, r, c)| (n.as_str(), *r, *c))
    }

    /// Freshly initialized parameters. Weight matrices and attention vectors
    /// are Glorot-uniform, hidden biases zero, output biases
    /// `scoring_output_bias_init`, embeddings uniform in ±0.1, and the
    /// centrality scale/shift take `gamma_init`/`beta_init`.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embed = Uniform::new_inclusive(-0.1, 0.1);
        let output_biases: Vec<ParamId> = self
            .layout
            .scoring
            .iter()
            .map(|s| s.layers.last().expect("at least one dense layer").1)
            .collect();
        let mut store = ParamStore::new();
        for (idx, (name, rows, cols)) in self.layout.shapes.iter().enumerate() {
            let t = if name.starts_with("scoring.") && name.contains(".w") {
                xavier(&mut rng, *rows, *cols, *rows, *cols)
            } else if name.starts_with("attention.") {
                xavier(&mut rng, *rows, *cols, *rows, 1)
            } else if name == "predicate_embedding" {
                Tensor::new(*rows, *cols, (0..rows * cols).map(|_| embed.sample(&mut rng)).collect())
            } else if name.ends_with(".gamma") {
                Tensor::scalar(self.config.gamma_init)
            } else if name.ends_with(".beta") {
                Tensor::scalar(self.config.beta_init)
            } else if output_biases.contains(&ParamId(idx)) {
                Tensor::scalar(self.config.scoring_output_bias_init)
            } else {
                Tensor::zeros(*rows, *cols)
            };
            store.insert(name.clone(), t).expect("layout names are unique");
        }
        store
    }

    /// Checks that `params` has exactly this model's names and shapes.
    pub fn check_params(&self, params: &ParamStore) -> Result<()> {
        if params.len() != self.layout.shapes.len() {
            return Err(GeniError::Shape(format!(
                "model expects {} parameter tensors, got {}",
                self.layout.shapes.len(),
                params.len()
            )));
        }
        for ((id, name, t), (want, rows, cols)) in params.iter().zip(&self.layout.shapes) {
            if name != want || t.shape() != (*rows, *cols) {
                return Err(GeniError::Shape(format!(
                    "parameter {} is `{name}` {:?}, expected `{want}` ({rows}, {cols})",
                    id.0,
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    fn scoring_on_tape(&self, tape: &mut Tape, params: &ParamStore, head: usize, z: NodeRef) -> NodeRef {
        let layers = &self.layout.scoring[head].layers;
        let mut x = z;
        for (k, &(w, b)) in layers.iter().enumerate() {
            let w = tape.param(params, w);
            let b = tape.param(params, b);
            let xw = tape.matmul(x, w);
            x = tape.add_row_bias(xw, b);
            if k + 1 < layers.len() {
                x = tape.relu(x);
            }
        }
        x
    }

    /// One SA head: returns `(attention, aggregated)`.
    fn head_on_tape(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        layer: usize,
        head: usize,
        scores_in: NodeRef,
        embedding: NodeRef,
    ) -> (NodeRef, NodeRef) {
        let d = self.config.predicate_embedding_dim;
        let plan = &self.plan;
        let a = tape.param(params, self.layout.attention[layer][head]);
        let a_src = tape.element(a, 0);
        let a_pred = tape.slice(a, 1, d);
        let a_dst = tape.element(a, d + 1);
        let pred_term = tape.matvec(embedding, a_pred);

        let s_src = tape.gather(scores_in, plan.edge_src.clone());
        let s_dst = tape.gather(scores_in, plan.edge_dst.clone());
        let p_term = tape.gather(pred_term, plan.edge_row.clone());
        let src_term = tape.scale(a_src, s_src);
        let dst_term = tape.scale(a_dst, s_dst);
        let partial = tape.add(src_term, p_term);
        let per_edge = tape.add(partial, dst_term);

        let pre = tape.segment_sum(per_edge, plan.pair_offsets.clone());
        let logits = tape.leaky_relu(pre, ATTENTION_NEGATIVE_SLOPE);
        let alpha = tape.segment_softmax(logits, plan.node_offsets.clone());
        let neighbor_scores = tape.gather(scores_in, plan.pair_dst.clone());
        let weighted = tape.mul(alpha, neighbor_scores);
        let aggregated = tape.segment_sum(weighted, plan.node_offsets.clone());
        (alpha, aggregated)
    }

    fn mean_of(tape: &mut Tape, xs: &[NodeRef]) -> NodeRef {
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = tape.add(acc, x);
        }
        tape.const_scale(acc, 1.0 / xs.len() as f64)
    }

    /// Records the full forward pass on `tape`.
    pub fn forward(&self, tape: &mut Tape, params: &ParamStore) -> Result<ForwardPass> {
        self.check_params(params)?;
        let z = tape.constant(self.features.clone());
        let embedding = tape.param(params, self.layout.embedding);
        let initial: Vec<NodeRef> = (0..self.config.heads_per_layer[0])
            .map(|h| self.scoring_on_tape(tape, params, h, z))
            .collect();

        let mut attention = Vec::new();
        let mut aggregated = Vec::new();
        let mut averaged = Vec::new();
        for (l, &heads) in self.config.heads_per_layer.iter().enumerate() {
            let mut alphas = Vec::with_capacity(heads);
            let mut outs = Vec::with_capacity(heads);
            for h in 0..heads {
                let input = if l == 0 { initial[h] } else { averaged[l - 1] };
                let (alpha, out) = self.head_on_tape(tape, params, l, h, input, embedding);
                alphas.push(alpha);
                outs.push(out);
            }
            averaged.push(Self::mean_of(tape, &outs));
            attention.push(alphas);
            aggregated.push(outs);
        }

        let c = tape.constant(self.centrality.clone());
        let last = aggregated.last().expect("at least one layer");
        let adjusted: Vec<NodeRef> = last
            .iter()
            .enumerate()
            .map(|(h, &s)| {
                let factor = if self.config.flexible_ca {
                    let gamma = tape.param(params, self.layout.gamma[h]);
                    let beta = tape.param(params, self.layout.beta[h]);
                    let scaled = tape.scale(gamma, c);
                    tape.add_scalar(scaled, beta)
                } else {
                    c
                };
                tape.mul(factor, s)
            })
            .collect();
        let mean = Self::mean_of(tape, &adjusted);
        let output = tape.relu(mean);
        Ok(ForwardPass {
            output,
            initial,
            attention,
            aggregated,
            averaged,
        })
    }

    fn ensure_finite(&self, values: &[f64], what: &str) -> Result<()> {
        match values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(GeniError::NonFinite(format!(
                "{what} for node {} is {}",
                NodeId(i),
                values[i]
            ))),
        }
    }

    /// Final importance estimates `s*(i)` for every node.
    pub fn final_scores(&self, params: &ParamStore) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let fp = self.forward(&mut tape, params)?;
        for (l, outs) in fp.aggregated.iter().enumerate() {
            for &o in outs {
                self.ensure_finite(tape.value(o).data(), &format!("layer {l} aggregate"))?;
            }
        }
        let out = tape.value(fp.output).data().to_vec();
        self.ensure_finite(&out, "final score")?;
        Ok(out)
    }

    /// Every intermediate of a forward pass as plain vectors.
    pub fn trace(&self, params: &ParamStore) -> Result<ForwardTrace> {
        let mut tape = Tape::new();
        let fp = self.forward(&mut tape, params)?;
        let values = |n: NodeRef| tape.value(n).data().to_vec();
        let layers = fp
            .attention
            .iter()
            .zip(&fp.aggregated)
            .zip(&fp.averaged)
            .map(|((alphas, outs), &avg)| LayerTrace {
                heads: alphas
                    .iter()
                    .zip(outs)
                    .map(|(&alpha, &out)| HeadTrace {
                        attention: self.unflatten_attention(tape.value(alpha).data()),
                        aggregated: values(out),
                    })
                    .collect(),
                averaged: values(avg),
            })
            .collect();
        Ok(ForwardTrace {
            initial_scores: fp.initial.iter().map(|&n| values(n)).collect(),
            layers,
            final_scores: values(fp.output),
        })
    }

    fn unflatten_attention(&self, alpha: &[f64]) -> Vec<Vec<(NodeId, f64)>> {
        (0..self.node_count)
            .map(|i| {
                self.plan
                    .pair_range(i)
                    .map(|k| (NodeId(self.plan.pair_dst[k]), alpha[k]))
                    .collect()
            })
            .collect()
    }

    /// Scoring-network output of first-layer head `head` for every node.
    pub fn initial_scores(&self, params: &ParamStore, head: usize) -> Result<Vec<f64>> {
        self.check_params(params)?;
        if head >= self.layout.scoring.len() {
            return Err(GeniError::invalid(format!("no scoring network for head {head}")));
        }
        let mut tape = Tape::new();
        let z = tape.constant(self.features.clone());
        let out = self.scoring_on_tape(&mut tape, params, head, z);
        Ok(tape.value(out).data().to_vec())
    }

    fn attention_param<'p>(
        &self,
        params: &'p ParamStore,
        layer: usize,
        head: usize,
    ) -> Result<&'p Tensor> {
        self.check_params(params)?;
        let id = self
            .layout
            .attention
            .get(layer)
            .and_then(|hs| hs.get(head))
            .ok_or_else(|| GeniError::invalid(format!("no attention head {head} in layer {layer}")))?;
        Ok(params.get(*id))
    }

    fn check_scores(&self, scores_in: &[f64]) -> Result<()> {
        if scores_in.len() != self.node_count {
            return Err(GeniError::Shape(format!(
                "expected {} input scores, got {}",
                self.node_count,
                scores_in.len()
            )));
        }
        Ok(())
    }

    /// Attention logit of node `i` on candidate `j` (itself or an out-neighbor).
    pub fn attention_logit(
        &self,
        params: &ParamStore,
        layer: usize,
        head: usize,
        i: NodeId,
        j: NodeId,
        scores_in: &[f64],
    ) -> Result<f64> {
        let a = self.attention_param(params, layer, head)?.data();
        self.check_scores(scores_in)?;
        if i.0 >= self.node_count {
            return Err(GeniError::NodeOutOfRange {
                id: i.0,
                node_count: self.node_count,
            });
        }
        let pair = self.plan.find_pair(i.0, j.0).ok_or_else(|| {
            GeniError::invalid(format!("{j} is neither {i} nor one of its out-neighbors"))
        })?;
        let phi = params.get(self.layout.embedding);
        let d = self.config.predicate_embedding_dim;
        let mut pre = 0.0;
        for e in self.plan.entry_range(pair) {
            let row = phi.row(self.plan.edge_row[e]);
            let mut pred = 0.0;
            for k in 0..d {
                pred += row[k] * a[1 + k];
            }
            pre += a[0] * scores_in[i.0] + pred + a[d + 1] * scores_in[j.0];
        }
        Ok(if pre > 0.0 {
            pre
        } else {
            ATTENTION_NEGATIVE_SLOPE * pre
        })
    }

    /// Softmax of the attention logits over `i`'s candidates (self first).
    pub fn attention_coefficients(
        &self,
        params: &ParamStore,
        layer: usize,
        head: usize,
        i: NodeId,
        scores_in: &[f64],
    ) -> Result<Vec<(NodeId, f64)>> {
        if i.0 >= self.node_count {
            return Err(GeniError::NodeOutOfRange {
                id: i.0,
                node_count: self.node_count,
            });
        }
        let candidates: Vec<NodeId> = self
            .plan
            .pair_range(i.0)
            .map(|k| NodeId(self.plan.pair_dst[k]))
            .collect();
        let logits = candidates
            .iter()
            .map(|&j| self.attention_logit(params, layer, head, i, j, scores_in))
            .collect::<Result<Vec<_>>>()?;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(candidates
            .into_iter()
            .zip(exps)
            .map(|(j, e)| (j, e / total))
            .collect())
    }

    /// Runs layer `layer` on explicit per-head inputs and head-averages.
    pub fn aggregate_layer(
        &self,
        params: &ParamStore,
        layer: usize,
        inputs: &[Vec<f64>],
    ) -> Result<LayerTrace> {
        let heads = *self
            .config
            .heads_per_layer
            .get(layer)
            .ok_or_else(|| GeniError::invalid(format!("no layer {layer}")))?;
        if inputs.len() != heads {
            return Err(GeniError::Shape(format!(
                "layer {layer} has {heads} heads, got {} inputs",
                inputs.len()
            )));
        }
        let mut traces = Vec::with_capacity(heads);
        for (h, s) in inputs.iter().enumerate() {
            let mut attention = Vec::with_capacity(self.node_count);
            let mut aggregated = Vec::with_capacity(self.node_count);
            for i in 0..self.node_count {
                let alpha = self.attention_coefficients(params, layer, h, NodeId(i), s)?;
                aggregated.push(alpha.iter().map(|(j, w)| w * s[j.0]).sum());
                attention.push(alpha);
            }
            traces.push(HeadTrace {
                attention,
                aggregated,
            });
        }
        let averaged = (0..self.node_count)
            .map(|i| traces.iter().map(|t| t.aggregated[i]).sum::<f64>() / heads as f64)
            .collect();
        Ok(LayerTrace {
            heads: traces,
            averaged,
        })
    }

    /// Mean squared error on `batch` recorded on `tape`.
    pub fn loss_on_tape(
        &self,
        tape: &mut Tape,
        output: NodeRef,
        batch: &[NodeId],
        targets: &[f64],
    ) -> Result<NodeRef> {
        if batch.is_empty() {
            return Err(GeniError::invalid("loss over an empty batch"));
        }
        if batch.len() != targets.len() {
            return Err(GeniError::Shape("batch and targets differ in length".into()));
        }
        let idx: Arc<[usize]> = batch.iter().map(|n| n.0).collect();
        let picked = tape.gather(output, idx);
        let target = tape.constant(Tensor::vector(targets.to_vec()));
        let residual = tape.sub(picked, target);
        let sq = tape.mul(residual, residual);
        Ok(tape.mean(sq))
    }

    /// `(1/|batch|) Σ (s*(i) − g(i))²` over `batch`.
    pub fn loss(&self, params: &ParamStore, scores: &ScoreTable, batch: &[NodeId]) -> Result<f64> {
        if batch.is_empty() {
            return Err(GeniError::invalid("loss over an empty batch"));
        }
        let targets = scores.values_for(batch)?;
        let mut tape = Tape::new();
        let fp = self.forward(&mut tape, params)?;
        let loss = self.loss_on_tape(&mut tape, fp.output, batch, &targets)?;
        Ok(tape.value(loss).item())
    }
}

#[cfg(test)]
mod tests;
