use std::sync::Arc;

use crate::graph::{KnowledgeGraph, NodeId};

/// Flattened attention structure of a graph.
///
/// Every node `i` attends over its candidate set: itself first, then its
/// out-neighbors in ascending id order. Each (node, candidate) pair owns one
/// entry per parallel edge; the self pair owns one self-predicate entry plus
/// any explicit self-loops.
#[derive(Debug, Clone)]
pub(crate) struct AttentionPlan {
    pub edge_src: Arc<[usize]>,
    pub edge_dst: Arc<[usize]>,
    /// Row of the embedding table used by each entry.
    pub edge_row: Arc<[usize]>,
    /// Entry ranges per pair (`pairs + 1` values).
    pub pair_offsets: Arc<[usize]>,
    pub pair_dst: Arc<[usize]>,
    /// Pair ranges per node (`node_count + 1` values).
    pub node_offsets: Arc<[usize]>,
}

impl AttentionPlan {
    pub fn new(graph: &KnowledgeGraph, shared_embedding: bool) -> Self {
        let self_row = if shared_embedding {
            0
        } else {
            graph.self_predicate().index()
        };
        let row = |p: usize| if shared_embedding { 0 } else { p };

        let mut edge_src = Vec::new();
        let mut edge_dst = Vec::new();
        let mut edge_row = Vec::new();
        let mut pair_offsets = vec![0];
        let mut pair_dst = Vec::new();
        let mut node_offsets = vec![0];
        for i in graph.nodes() {
            let adj = graph.out_neighbors(i).expect("node in range");
            let mut push = |j: NodeId, rows: &mut dyn Iterator<Item = usize>| {
                for r in rows {
                    edge_src.push(i.0);
                    edge_dst.push(j.0);
                    edge_row.push(r);
                }
                pair_offsets.push(edge_src.len());
                pair_dst.push(j.0);
            };
            let self_loops = adj.iter().find(|(j, _)| *j == i);
            let mut self_rows = std::iter::once(self_row).chain(
                self_loops
                    .into_iter()
                    .flat_map(|(_, ps)| ps.iter().map(|p| row(p.0))),
            );
            push(i, &mut self_rows);
            for (j, ps) in adj.iter().filter(|(j, _)| *j != i) {
                push(*j, &mut ps.iter().map(|p| row(p.0)));
            }
            node_offsets.push(pair_dst.len());
        }
        AttentionPlan {
            edge_src: edge_src.into(),
            edge_dst: edge_dst.into(),
            edge_row: edge_row.into(),
            pair_offsets: pair_offsets.into(),
            pair_dst: pair_dst.into(),
            node_offsets: node_offsets.into(),
        }
    }

    pub fn pair_range(&self, i: usize) -> std::ops::Range<usize> {
        self.node_offsets[i]..self.node_offsets[i + 1]
    }

    pub fn entry_range(&self, pair: usize) -> std::ops::Range<usize> {
        self.pair_offsets[pair]..self.pair_offsets[pair + 1]
    }

    /// Pair index of candidate `j` in node `i`'s set.
    pub fn find_pair(&self, i: usize, j: usize) -> Option<usize> {
        self.pair_range(i).find(|&k| self.pair_dst[k] == j)
    }
}
