use std::fs;
use std::path::{Path, PathBuf};

use geni_core::baselines::run_baseline;
use geni_core::train::MetricSummary;
use geni_core::{
    cross_validate, evaluate_in_domain, evaluate_out_of_domain, generate_structural_features,
    load_checkpoint, load_features, load_graph, load_scores, save_checkpoint, write_scores,
    Checkpoint, CheckpointMeta, CvOptions, EvalReport, FeatureMatrix, Geni, GeniError,
    KnowledgeGraph, LoadOptions, ScoreTransform,
};

use crate::config::RunConfig;
use crate::{BaselineArgs, CliError, CommonArgs, CvArgs, EvalArgs, PredictArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

fn resolve(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(g) = &common.graph {
        cfg.graph.path = Some(g.clone());
    }
    if let Some(d) = &common.out_dir {
        cfg.output.dir = d.clone();
    }
    Ok(cfg)
}

fn resolve_train(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = resolve(&args.common)?;
    if let Some(f) = &args.features {
        cfg.features.path = Some(f.clone());
    }
    if let Some(s) = &args.scores {
        cfg.scores.path = Some(s.clone());
    }
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("{flag} is required (or set `{key}` in --config)")))
}

fn graph_options(cfg: &RunConfig) -> LoadOptions {
    LoadOptions {
        add_inverse_edges: cfg.graph.add_inverse_edges,
    }
}

fn read_graph(cfg: &RunConfig, options: LoadOptions) -> Result<KnowledgeGraph> {
    let path = required(&cfg.graph.path, "--graph", "graph.path")?;
    let graph = load_graph(path, options)?;
    log::info!(
        "graph: {} nodes, {} edges, {} predicates",
        graph.node_count(),
        graph.edge_count(),
        graph.predicate_count()
    );
    Ok(graph)
}

fn read_features(cfg: &RunConfig, graph: &KnowledgeGraph) -> Result<FeatureMatrix> {
    match &cfg.features.path {
        Some(p) => Ok(load_features(p, graph)?),
        None => {
            log::info!("no feature file, using {} structural features", cfg.features.structural_dim);
            Ok(generate_structural_features(graph, cfg.features.structural_dim)?)
        }
    }
}

fn create_out_dir(cfg: &RunConfig) -> Result<()> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(GeniError::from)?;
    text.push('\n');
    write_text(path, &text)
}

/// Shared setup of `train` and `cv`: inputs loaded, hidden sizes pinned so
/// the echoed config is fully explicit.
struct Prepared {
    cfg: RunConfig,
    graph: KnowledgeGraph,
    model: Geni,
    scores: geni_core::ScoreTable,
}

fn prepare(mut cfg: RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let scores_path = required(&cfg.scores.path, "--scores", "scores.path")?.to_owned();
    let graph = read_graph(&cfg, graph_options(&cfg))?;
    let features = read_features(&cfg, &graph)?;
    cfg.model.scoring_hidden_sizes = Some(cfg.model.hidden_sizes(features.dim()));
    let scores = load_scores(&scores_path, &graph, cfg.scores.transform)?;
    let model = Geni::new(cfg.model.clone(), &graph, &features)?;
    Ok(Prepared {
        cfg,
        graph,
        model,
        scores,
    })
}

pub fn train(args: TrainArgs) -> Result<()> {
    let Prepared {
        cfg,
        graph,
        model,
        scores,
    } = prepare(resolve_train(&args)?)?;
    let outcome = geni_core::train(&model, &scores, &cfg.train)?;
    log::info!(
        "trained {} epochs, best validation loss {:.6} at epoch {}",
        outcome.history.epochs(),
        outcome.history.best_val_loss(),
        outcome.history.best_epoch
    );
    let meta = CheckpointMeta {
        model: cfg.model.clone(),
        feature_dim: model.feature_dim(),
        score_transform: cfg.scores.transform,
        graph_options: graph_options(&cfg),
        structural_features: cfg.features.path.is_none(),
    };
    create_out_dir(&cfg)?;
    save_checkpoint(cfg.output.path(&cfg.output.checkpoint), &Checkpoint::new(meta, &graph, outcome.params))?;
    write_json(&cfg.output.path(&cfg.output.history), &outcome.history)?;
    write_text(&cfg.output.path(&cfg.output.config), &cfg.to_json())
}

pub fn cv(args: CvArgs) -> Result<()> {
    let mut cfg = resolve_train(&args.train)?;
    if let Some(k) = args.folds {
        cfg.eval.folds = k;
    }
    if let Some(p) = args.parallel_folds {
        cfg.eval.parallel_folds = p;
    }
    let Prepared {
        cfg, model, scores, ..
    } = prepare(cfg)?;
    let opts = CvOptions {
        folds: cfg.eval.folds,
        parallel_folds: cfg.eval.parallel_folds,
    };
    let report = cross_validate(&model, &scores, &cfg.train, opts)?;
    create_out_dir(&cfg)?;
    write_json(&cfg.output.path(&cfg.output.report), &report)?;
    write_text(&cfg.output.path(&cfg.output.config), &cfg.to_json())
}

pub fn baseline(args: BaselineArgs) -> Result<()> {
    let mut cfg = resolve(&args.common)?;
    if let Some(s) = &args.scores {
        cfg.scores.path = Some(s.clone());
    }
    apply_eval_args(&mut cfg, &args.eval);
    cfg.validate()?;
    let graph = read_graph(&cfg, graph_options(&cfg))?;
    let seeds = if args.method.needs_seeds() {
        let path = cfg.scores.path.as_deref().ok_or_else(|| {
            CliError::Usage(format!("--method {} needs seed scores via --scores", args.method))
        })?;
        // the teleport distribution is proportional to the raw seed scores
        Some(load_scores(path, &graph, ScoreTransform::Raw)?)
    } else {
        None
    };
    let values = run_baseline(args.method, &graph, seeds.as_ref(), &cfg.baseline)?;
    create_out_dir(&cfg)?;
    write_scores(cfg.output.path(&cfg.output.scores), &graph, &values)?;
    report_if_requested(&cfg, &graph, &values, cfg.scores.transform)?;
    write_text(&cfg.output.path(&cfg.output.config), &cfg.to_json())
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let mut cfg = resolve(&args.common)?;
    if let Some(f) = &args.features {
        cfg.features.path = Some(f.clone());
    }
    apply_eval_args(&mut cfg, &args.eval);
    let ck = load_checkpoint(&args.checkpoint)?;
    let graph = read_graph(&cfg, ck.meta.graph_options)?;
    ck.check_graph(&graph)?;
    let features = match &cfg.features.path {
        Some(p) => load_features(p, &graph)?,
        None if ck.meta.structural_features => generate_structural_features(&graph, ck.meta.feature_dim)?,
        None => {
            return Err(CliError::Usage(
                "the checkpoint was trained on a feature file; pass it with --features".into(),
            ))
        }
    };
    if features.dim() != ck.meta.feature_dim {
        return Err(CliError::Usage(format!(
            "features have {} columns but the checkpoint expects {}",
            features.dim(),
            ck.meta.feature_dim
        )));
    }
    let model = Geni::new(ck.meta.model.clone(), &graph, &features)?;
    model.check_params(&ck.params)?;
    let values = model.final_scores(&ck.params)?;
    create_out_dir(&cfg)?;
    write_scores(cfg.output.path(&cfg.output.scores), &graph, &values)?;
    report_if_requested(&cfg, &graph, &values, ck.meta.score_transform)
}

fn apply_eval_args(cfg: &mut RunConfig, eval: &EvalArgs) {
    if let Some(p) = &eval.eval_scores {
        cfg.scores.eval_path = Some(p.clone());
    }
    if let Some(p) = &eval.candidates {
        cfg.eval.candidates = Some(p.clone());
    }
}

/// In-domain metrics over every node of the truth table, plus out-of-domain
/// NDCG when a candidate list is configured. Written as a one-fold report.
fn report_if_requested(
    cfg: &RunConfig,
    graph: &KnowledgeGraph,
    predicted: &[f64],
    transform: ScoreTransform,
) -> Result<()> {
    let Some(truth_path) = &cfg.scores.eval_path else {
        if cfg.eval.candidates.is_some() {
            return Err(CliError::Usage("--candidates needs --eval-scores".into()));
        }
        return Ok(());
    };
    let truth = load_scores(truth_path, graph, transform)?;
    let mut report = EvalReport::from_folds(transform, &[evaluate_in_domain(predicted, &truth)?]);
    if let Some(path) = &cfg.eval.candidates {
        let candidates = read_candidates(path, graph)?;
        for (name, v) in evaluate_out_of_domain(predicted, &truth, &candidates, &cfg.eval.ks)? {
            report
                .metrics
                .insert(format!("ood_{name}"), MetricSummary::from_folds(vec![Some(v)]));
        }
    }
    write_json(&cfg.output.path(&cfg.output.report), &report)
}

fn read_candidates(path: &Path, graph: &KnowledgeGraph) -> Result<Vec<geni_core::NodeId>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut nodes = Vec::new();
    let mut unknown = Vec::new();
    for name in text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.is_empty()) {
        match graph.node_id(name) {
            Some(id) => nodes.push(id),
            None => unknown.push(name.to_owned()),
        }
    }
    if !unknown.is_empty() {
        return Err(GeniError::UnknownNodes(unknown).into());
    }
    Ok(nodes)
}
