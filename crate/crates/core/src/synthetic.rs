//! Seeded random graphs and features for tests, benchmarks and demos.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureMatrix;
use crate::graph::KnowledgeGraph;

/// `edges` uniformly random typed edges over `nodes` nodes. Self-loops,
/// parallel edges, sinks and isolated nodes can all occur.
pub fn random_graph(nodes: usize, edges: usize, predicates: usize, seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let list: Vec<_> = (0..edges)
        .map(|_| {
            (
                rng.gen_range(0..nodes),
                rng.gen_range(0..predicates),
                rng.gen_range(0..nodes),
            )
        })
        .collect();
    KnowledgeGraph::from_id_edges(nodes, predicates, &list).expect("ids in range")
}

/// Every node gets one out-edge to a random other node, then `extra_edges`
/// more random non-loop edges are added. No node is a sink.
pub fn random_graph_without_sinks(
    nodes: usize,
    extra_edges: usize,
    predicates: usize,
    seed: u64,
) -> KnowledgeGraph {
    assert!(nodes >= 2, "need at least two nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let other = |rng: &mut ChaCha8Rng, s: usize| {
        let o = rng.gen_range(0..nodes - 1);
        if o >= s {
            o + 1
        } else {
            o
        }
    };
    let mut list = Vec::with_capacity(nodes + extra_edges);
    for s in 0..nodes {
        let o = other(&mut rng, s);
        list.push((s, rng.gen_range(0..predicates), o));
    }
    for _ in 0..extra_edges {
        let s = rng.gen_range(0..nodes);
        let o = other(&mut rng, s);
        list.push((s, rng.gen_range(0..predicates), o));
    }
    KnowledgeGraph::from_id_edges(nodes, predicates, &list).expect("ids in range")
}

/// Features drawn uniformly from `[-1, 1]`.
pub fn random_features(nodes: usize, dim: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..nodes)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    FeatureMatrix::from_rows(rows).expect("finite rows")
}
