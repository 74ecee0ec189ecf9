use super::*;
use crate::graph::{LoadOptions, PredicateId};
use crate::scores::ScoreTransform;
use crate::synthetic::{random_features, random_graph};

fn set(params: &mut ParamStore, name: &str, t: Tensor) {
    let id = params.id(name).unwrap_or_else(|| panic!("no parameter {name}"));
    params.set(id, t).unwrap();
}

fn zero_all(params: &mut ParamStore) {
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let (r, c) = params.get(id).shape();
        params.set(id, Tensor::zeros(r, c)).unwrap();
    }
}

/// a -p-> b, a -q-> b, b -p-> c; c is a sink.
fn small_graph() -> KnowledgeGraph {
    KnowledgeGraph::from_triples(
        [("a", "p", "b"), ("a", "q", "b"), ("b", "p", "c")],
        LoadOptions::default(),
    )
    .unwrap()
}

fn small_model(config: GeniConfig) -> (KnowledgeGraph, Geni) {
    let g = small_graph();
    let f = FeatureMatrix::from_rows(vec![vec![1.0, 0.5], vec![-0.5, 2.0], vec![0.0, 1.0]]).unwrap();
    let m = Geni::new(config, &g, &f).unwrap();
    (g, m)
}

fn one_head(dim: usize) -> GeniConfig {
    GeniConfig {
        heads_per_layer: vec![1],
        predicate_embedding_dim: dim,
        ..GeniConfig::default()
    }
}

#[test]
fn parameter_layout() {
    let (_, m) = small_model(GeniConfig::with_shape(2, 2));
    let names: Vec<&str> = m.param_shapes().map(|(n, _, _)| n).collect();
    assert_eq!(
        names,
        vec![
            "scoring.0.w0",
            "scoring.0.b0",
            "scoring.0.w1",
            "scoring.0.b1",
            "scoring.1.w0",
            "scoring.1.b0",
            "scoring.1.w1",
            "scoring.1.b1",
            "predicate_embedding",
            "attention.0.0",
            "attention.0.1",
            "attention.1.0",
            "attention.1.1",
            "ca.0.gamma",
            "ca.0.beta",
            "ca.1.gamma",
            "ca.1.beta",
        ]
    );
    let p = m.init_params(1);
    assert_eq!(p.by_name("predicate_embedding").unwrap().shape(), (3, 10));
    assert_eq!(p.by_name("attention.1.0").unwrap().shape(), (12, 1));
    assert_eq!(p.by_name("scoring.0.w0").unwrap().shape(), (2, 2));
    assert_eq!(p.by_name("ca.1.gamma").unwrap().item(), 1.0);
    assert_eq!(p.by_name("ca.1.beta").unwrap().item(), 0.0);
    assert!(p
        .by_name("predicate_embedding")
        .unwrap()
        .data()
        .iter()
        .all(|v| v.abs() <= 0.1));
    assert_eq!(m.init_params(1), p);
    assert_ne!(m.init_params(2), p);
}

#[test]
fn feature_rows_must_match_graph() {
    let g = small_graph();
    let f = FeatureMatrix::from_rows(vec![vec![1.0]; 2]).unwrap();
    assert!(matches!(Geni::new(GeniConfig::default(), &g, &f), Err(GeniError::Shape(_))));
}

#[test]
fn foreign_params_rejected() {
    let (_, m) = small_model(GeniConfig::default());
    let (_, other) = small_model(GeniConfig::with_shape(2, 1));
    assert!(m.final_scores(&other.init_params(0)).is_err());
}

#[test]
fn zero_scoring_network_gives_zero() {
    let (_, m) = small_model(GeniConfig::default());
    let mut p = m.init_params(3);
    zero_all(&mut p);
    for h in 0..4 {
        assert_eq!(m.initial_scores(&p, h).unwrap(), vec![0.0; 3]);
    }
    assert!(m.initial_scores(&p, 4).is_err());
}

#[test]
fn single_hidden_unit_passes_input() {
    let g = KnowledgeGraph::from_triples([("a", "p", "b")], LoadOptions::default()).unwrap();
    let f = FeatureMatrix::from_rows(vec![vec![1.0], vec![1.0]]).unwrap();
    let config = GeniConfig {
        scoring_hidden_sizes: Some(vec![1]),
        ..one_head(1)
    };
    let m = Geni::new(config, &g, &f).unwrap();
    let mut p = m.init_params(0);
    set(&mut p, "scoring.0.w0", Tensor::new(1, 1, vec![1.0]));
    set(&mut p, "scoring.0.b0", Tensor::vector(vec![0.0]));
    set(&mut p, "scoring.0.w1", Tensor::new(1, 1, vec![1.0]));
    set(&mut p, "scoring.0.b1", Tensor::vector(vec![0.0]));
    assert_eq!(m.initial_scores(&p, 0).unwrap(), vec![1.0, 1.0]);
}

#[test]
fn scoring_network_matches_dense_evaluation() {
    let (_, m) = small_model(GeniConfig {
        scoring_hidden_sizes: Some(vec![3]),
        ..one_head(2)
    });
    let mut p = m.init_params(0);
    let w0 = vec![0.5, -1.0, 0.25, 1.5, 0.75, -0.5];
    let b0 = vec![0.1, 0.2, -0.3];
    let w1 = vec![1.0, -2.0, 0.5];
    let b1 = 0.05;
    set(&mut p, "scoring.0.w0", Tensor::new(2, 3, w0.clone()));
    set(&mut p, "scoring.0.b0", Tensor::vector(b0.clone()));
    set(&mut p, "scoring.0.w1", Tensor::new(3, 1, w1.clone()));
    set(&mut p, "scoring.0.b1", Tensor::vector(vec![b1]));
    let feats = [[1.0, 0.5], [-0.5, 2.0], [0.0, 1.0]];
    let expected: Vec<f64> = feats
        .iter()
        .map(|z| {
            let hidden: Vec<f64> = (0..3)
                .map(|u| (z[0] * w0[u] + z[1] * w0[3 + u] + b0[u]).max(0.0))
                .collect();
            hidden.iter().zip(&w1).map(|(h, w)| h * w).sum::<f64>() + b1
        })
        .collect();
    let got = m.initial_scores(&p, 0).unwrap();
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).abs() < 1e-14, "{got:?} vs {expected:?}");
    }
}

#[test]
fn zero_attention_vector_gives_zero_logits() {
    let (g, m) = small_model(one_head(3));
    let mut p = m.init_params(1);
    set(&mut p, "attention.0.0", Tensor::vector(vec![0.0; 5]));
    let s = [0.3, -1.0, 2.0];
    for i in g.nodes() {
        assert_eq!(m.attention_logit(&p, 0, 0, i, i, &s).unwrap(), 0.0);
        for (j, _) in g.out_neighbors(i).unwrap() {
            assert_eq!(m.attention_logit(&p, 0, 0, i, *j, &s).unwrap(), 0.0);
        }
    }
}

#[test]
fn logit_of_single_edge() {
    let (g, m) = small_model(one_head(3));
    let mut p = m.init_params(1);
    set(&mut p, "attention.0.0", Tensor::vector(vec![1.0, 0.0, 0.0, 0.0, 0.0]));
    let b = g.node_id("b").unwrap();
    let c = g.node_id("c").unwrap();
    let s = [0.0, 2.0, -7.0];
    assert_eq!(m.attention_logit(&p, 0, 0, b, c, &s).unwrap(), 2.0);
    // negative pre-activation goes through the leaky branch
    let s = [0.0, -2.0, 5.0];
    assert!((m.attention_logit(&p, 0, 0, b, c, &s).unwrap() + 0.4).abs() < 1e-15);
}

#[test]
fn logit_sums_parallel_edges_before_nonlinearity() {
    let (g, m) = small_model(one_head(2));
    let mut p = m.init_params(5);
    let a = vec![0.3, -0.7, 1.1, -0.4];
    let phi = vec![0.2, -0.5, 0.9, 0.1, -0.3, 0.4];
    set(&mut p, "attention.0.0", Tensor::vector(a.clone()));
    set(&mut p, "predicate_embedding", Tensor::new(3, 2, phi.clone()));
    let a_id = g.node_id("a").unwrap();
    let b_id = g.node_id("b").unwrap();
    let s = [0.8, -1.3, 0.0];
    let term = |pred: usize| {
        a[0] * s[0] + a[1] * phi[pred * 2] + a[2] * phi[pred * 2 + 1] + a[3] * s[1]
    };
    let pre = term(0) + term(1);
    let expected = if pre > 0.0 { pre } else { 0.2 * pre };
    let got = m.attention_logit(&p, 0, 0, a_id, b_id, &s).unwrap();
    assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    // self term uses the reserved row
    let self_pre = a[0] * s[0] + a[1] * phi[4] + a[2] * phi[5] + a[3] * s[0];
    let self_expected = if self_pre > 0.0 { self_pre } else { 0.2 * self_pre };
    let got = m.attention_logit(&p, 0, 0, a_id, a_id, &s).unwrap();
    assert!((got - self_expected).abs() < 1e-15);
}

#[test]
fn logit_outside_neighborhood_errors() {
    let (g, m) = small_model(one_head(2));
    let p = m.init_params(0);
    let a = g.node_id("a").unwrap();
    let c = g.node_id("c").unwrap();
    assert!(m.attention_logit(&p, 0, 0, a, c, &[0.0; 3]).is_err());
    assert!(m.attention_logit(&p, 0, 0, c, a, &[0.0; 3]).is_err());
    assert!(m.attention_logit(&p, 1, 0, a, a, &[0.0; 3]).is_err());
}

#[test]
fn sink_attends_only_to_itself() {
    let (g, m) = small_model(one_head(2));
    let p = m.init_params(0);
    let c = g.node_id("c").unwrap();
    let alpha = m.attention_coefficients(&p, 0, 0, c, &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(alpha, vec![(c, 1.0)]);
}

#[test]
fn equal_logits_split_evenly() {
    let (g, m) = small_model(one_head(2));
    let mut p = m.init_params(0);
    set(&mut p, "attention.0.0", Tensor::vector(vec![0.0; 4]));
    let b = g.node_id("b").unwrap();
    let alpha = m.attention_coefficients(&p, 0, 0, b, &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(alpha.len(), 2);
    assert_eq!(alpha[0].1, 0.5);
    assert_eq!(alpha[1].1, 0.5);
}

#[test]
fn softmax_of_zero_and_ln3() {
    let (g, m) = small_model(one_head(2));
    let mut p = m.init_params(0);
    set(&mut p, "attention.0.0", Tensor::vector(vec![0.0, 0.0, 0.0, 1.0]));
    set(&mut p, "predicate_embedding", Tensor::zeros(3, 2));
    let b = g.node_id("b").unwrap();
    let c = g.node_id("c").unwrap();
    let mut s = [0.0; 3];
    s[c.0] = 3f64.ln();
    let alpha = m.attention_coefficients(&p, 0, 0, b, &s).unwrap();
    assert_eq!(alpha[0].0, b);
    assert!((alpha[0].1 - 0.25).abs() < 1e-15);
    assert_eq!(alpha[1].0, c);
    assert!((alpha[1].1 - 0.75).abs() < 1e-15);
}

#[test]
fn aggregation_identity_and_average() {
    let (g, m) = small_model(one_head(2));
    let mut p = m.init_params(0);
    set(&mut p, "attention.0.0", Tensor::vector(vec![0.0; 4]));
    let b = g.node_id("b").unwrap();
    let c = g.node_id("c").unwrap();
    let mut s = vec![0.0; 3];
    s[b.0] = 2.0;
    s[c.0] = 4.0;
    let out = m.aggregate_layer(&p, 0, &[s.clone()]).unwrap();
    assert_eq!(out.heads[0].aggregated[c.0], 4.0);
    assert_eq!(out.heads[0].aggregated[b.0], 3.0);
    assert_eq!(out.averaged, out.heads[0].aggregated);
}

#[test]
fn two_heads_average_matches_brute_force() {
    let (g, m) = small_model(GeniConfig {
        heads_per_layer: vec![2],
        predicate_embedding_dim: 2,
        ..GeniConfig::default()
    });
    let mut p = m.init_params(0);
    set(&mut p, "attention.0.0", Tensor::vector(vec![0.5, 1.0, -1.0, 0.25]));
    set(&mut p, "attention.0.1", Tensor::vector(vec![-0.3, 0.2, 0.7, 1.5]));
    let phi = vec![0.3, -0.2, 0.1, 0.4, -0.6, 0.5];
    set(&mut p, "predicate_embedding", Tensor::new(3, 2, phi.clone()));
    let inputs = vec![vec![1.0, -0.5, 2.0], vec![0.2, 0.9, -1.1]];
    let out = m.aggregate_layer(&p, 0, &inputs).unwrap();

    // brute force: enumerate candidates and their edge predicates by hand
    let (a, b, c) = (0usize, 1usize, 2usize);
    assert_eq!(g.node_name(NodeId(a)), "a");
    let cands: Vec<Vec<(usize, Vec<usize>)>> = vec![
        vec![(a, vec![2]), (b, vec![0, 1])],
        vec![(b, vec![2]), (c, vec![0])],
        vec![(c, vec![2])],
    ];
    let att = [
        [0.5, 1.0, -1.0, 0.25],
        [-0.3, 0.2, 0.7, 1.5],
    ];
    let mut mean = vec![0.0; 3];
    for h in 0..2 {
        let s = &inputs[h];
        for i in 0..3 {
            let logits: Vec<f64> = cands[i]
                .iter()
                .map(|(j, preds)| {
                    let pre: f64 = preds
                        .iter()
                        .map(|&r| {
                            att[h][0] * s[i]
                                + att[h][1] * phi[2 * r]
                                + att[h][2] * phi[2 * r + 1]
                                + att[h][3] * s[*j]
                        })
                        .sum();
                    if pre > 0.0 {
                        pre
                    } else {
                        0.2 * pre
                    }
                })
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            let agg: f64 = cands[i]
                .iter()
                .zip(&logits)
                .map(|((j, _), l)| l.exp() / z * s[*j])
                .sum();
            assert!((out.heads[h].aggregated[i] - agg).abs() < 1e-14);
            mean[i] += agg / 2.0;
        }
    }
    for i in 0..3 {
        assert!((out.averaged[i] - mean[i]).abs() < 1e-14);
    }
}

#[test]
fn centrality_values() {
    let g = KnowledgeGraph::from_id_edges(3, 1, &[(0, 0, 1), (0, 0, 1), (2, 0, 1), (1, 0, 2)]).unwrap();
    assert_eq!(centrality(&g, NodeId(0), 1.0), 0.0);
    assert!((centrality(&g, NodeId(1), 1.0) - 4f64.ln()).abs() < 1e-15);
    let e = std::f64::consts::E;
    assert!(((e - 1.0 + 1.0f64).ln() - 1.0).abs() < 1e-15);
    assert!(6f64.ln() > 3f64.ln());
    assert!(centrality(&g, NodeId(1), 1.0) > centrality(&g, NodeId(2), 1.0));
}

#[test]
fn flexible_with_identity_scale_equals_fixed() {
    let g = random_graph(12, 30, 3, 4);
    let f = random_features(12, 5, 4);
    for heads in [1, 3] {
        let flex = Geni::new(GeniConfig::with_shape(2, heads), &g, &f).unwrap();
        let fixed = Geni::new(
            GeniConfig {
                flexible_ca: false,
                ..GeniConfig::with_shape(2, heads)
            },
            &g,
            &f,
        )
        .unwrap();
        let p = flex.init_params(9);
        assert_eq!(flex.final_scores(&p).unwrap(), fixed.final_scores(&p).unwrap());
    }
}

#[test]
fn zero_centrality_zeroes_output() {
    // node 0 has no in-edges; with scores forced to 1 its output is relu(0·1)
    let g = KnowledgeGraph::from_id_edges(2, 1, &[(0, 0, 1)]).unwrap();
    let f = FeatureMatrix::from_rows(vec![vec![0.0], vec![0.0]]).unwrap();
    let m = Geni::new(one_head(1), &g, &f).unwrap();
    let mut p = m.init_params(0);
    set(&mut p, "scoring.0.b1", Tensor::vector(vec![1.0]));
    let trace = m.trace(&p).unwrap();
    assert_eq!(trace.layers[0].heads[0].aggregated[0], 1.0);
    assert_eq!(trace.final_scores[0], 0.0);
    assert!((trace.final_scores[1] - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn loss_values() {
    let g = random_graph(8, 20, 2, 1);
    let f = random_features(8, 3, 1);
    let m = Geni::new(GeniConfig::default(), &g, &f).unwrap();
    let p = m.init_params(2);
    let s = m.final_scores(&p).unwrap();

    let exact = ScoreTable::new((0..8).map(|i| (NodeId(i), s[i])), ScoreTransform::Raw).unwrap();
    let all: Vec<NodeId> = (0..8).map(NodeId).collect();
    assert_eq!(m.loss(&p, &exact, &all).unwrap(), 0.0);

    let off = ScoreTable::new([(NodeId(0), s[0] + 3.0), (NodeId(1), s[1] + 1.0)], ScoreTransform::Raw)
        .unwrap();
    assert!((m.loss(&p, &off, &[NodeId(0)]).unwrap() - 9.0).abs() < 1e-12);
    assert!((m.loss(&p, &off, &[NodeId(0), NodeId(1)]).unwrap() - 5.0).abs() < 1e-12);
    assert!(m.loss(&p, &off, &[]).is_err());
    assert!(m.loss(&p, &off, &[NodeId(2)]).is_err());
}

#[test]
fn trace_agrees_with_plain_layer_evaluation() {
    let g = random_graph(15, 40, 3, 7);
    let f = random_features(15, 4, 7);
    let config = GeniConfig {
        heads_per_layer: vec![2, 3],
        num_layers: 2,
        ..GeniConfig::default()
    };
    let m = Geni::new(config, &g, &f).unwrap();
    let p = m.init_params(11);
    let trace = m.trace(&p).unwrap();
    let l0 = m.aggregate_layer(&p, 0, &trace.initial_scores).unwrap();
    let l1 = m
        .aggregate_layer(&p, 1, &vec![trace.layers[0].averaged.clone(); 3])
        .unwrap();
    for (plain, taped) in [(&l0, &trace.layers[0]), (&l1, &trace.layers[1])] {
        for (ph, th) in plain.heads.iter().zip(&taped.heads) {
            for i in 0..15 {
                assert!((ph.aggregated[i] - th.aggregated[i]).abs() < 1e-13);
                for (x, y) in ph.attention[i].iter().zip(&th.attention[i]) {
                    assert_eq!(x.0, y.0);
                    assert!((x.1 - y.1).abs() < 1e-13);
                }
            }
        }
    }
    for layer in &trace.layers {
        for head in &layer.heads {
            for alpha in &head.attention {
                let total: f64 = alpha.iter().map(|x| x.1).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }
    assert!(trace.final_scores.iter().all(|&v| v >= 0.0));
}

#[test]
fn tied_embeddings_equal_single_predicate_graph() {
    let multi = random_graph(14, 40, 3, 21);
    let edges: Vec<(usize, usize, usize)> = multi.edges().map(|(s, _, o)| (s.0, 0, o.0)).collect();
    let single = KnowledgeGraph::from_id_edges(14, 1, &edges).unwrap();
    let f = random_features(14, 4, 21);
    let config = GeniConfig::with_shape(2, 2);
    let m_multi = Geni::new(config.clone(), &multi, &f).unwrap();
    let m_single = Geni::new(config, &single, &f).unwrap();

    let mut p_multi = m_multi.init_params(3);
    let row = vec![0.05, -0.02, 0.08, 0.01, -0.07, 0.03, 0.0, 0.09, -0.04, 0.06];
    set(&mut p_multi, "predicate_embedding", Tensor::new(4, 10, row.repeat(4)));
    let mut p_single = m_single.init_params(3);
    for (id, name, t) in p_multi.iter() {
        if name != "predicate_embedding" {
            p_single.set(id, t.clone()).unwrap();
        }
    }
    set(&mut p_single, "predicate_embedding", Tensor::new(2, 10, row.repeat(2)));
    assert_eq!(
        m_multi.final_scores(&p_multi).unwrap(),
        m_single.final_scores(&p_single).unwrap()
    );

    // the shared-embedding configuration is the same tying with one row
    let shared = Geni::new(
        GeniConfig {
            shared_predicate_embedding: true,
            ..GeniConfig::with_shape(2, 2)
        },
        &multi,
        &f,
    )
    .unwrap();
    assert_eq!(shared.embedding_rows(), 1);
    let mut p_shared = shared.init_params(3);
    for (id, name, t) in p_multi.iter() {
        if name != "predicate_embedding" {
            p_shared.set(id, t.clone()).unwrap();
        }
    }
    set(&mut p_shared, "predicate_embedding", Tensor::new(1, 10, row));
    assert_eq!(
        shared.final_scores(&p_shared).unwrap(),
        m_multi.final_scores(&p_multi).unwrap()
    );
}

#[test]
fn self_loops_join_the_self_candidate() {
    let g = KnowledgeGraph::from_triples([("a", "p", "a"), ("a", "q", "b")], LoadOptions::default())
        .unwrap();
    let f = FeatureMatrix::from_rows(vec![vec![1.0], vec![2.0]]).unwrap();
    let m = Geni::new(one_head(1), &g, &f).unwrap();
    let mut p = m.init_params(0);
    set(&mut p, "attention.0.0", Tensor::vector(vec![0.0, 1.0, 0.0]));
    set(&mut p, "predicate_embedding", Tensor::new(3, 1, vec![0.5, 0.25, 2.0]));
    let a = g.node_id("a").unwrap();
    // self term: φ(self) + φ(p) = 2.5
    assert_eq!(m.attention_logit(&p, 0, 0, a, a, &[0.0, 0.0]).unwrap(), 2.5);
    let alpha = m.attention_coefficients(&p, 0, 0, a, &[0.0, 0.0]).unwrap();
    assert_eq!(alpha.len(), 2);
    assert_eq!(g.self_predicate(), PredicateId(2));
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

    #[test]
    fn permutation_equivariance(seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        let n = 12;
        let g = random_graph(n, 30, 3, seed);
        let f = random_features(n, 3, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef));
        let edges: Vec<_> = g.edges().map(|(s, p, o)| (perm[s.0], p.0, perm[o.0])).collect();
        let g2 = KnowledgeGraph::from_id_edges(n, 3, &edges).unwrap();
        let mut rows2 = vec![Vec::new(); n];
        for i in 0..n {
            rows2[perm[i]] = f.row(NodeId(i)).to_vec();
        }
        let f2 = FeatureMatrix::from_rows(rows2).unwrap();
        let config = GeniConfig::with_shape(2, 2);
        let m1 = Geni::new(config.clone(), &g, &f).unwrap();
        let m2 = Geni::new(config, &g2, &f2).unwrap();
        let p = m1.init_params(seed);
        let s1 = m1.final_scores(&p).unwrap();
        let s2 = m2.final_scores(&p).unwrap();
        for i in 0..n {
            proptest::prop_assert!((s1[i] - s2[perm[i]]).abs() < 1e-12);
            proptest::prop_assert!(s1[i] >= 0.0);
        }
    }
}
