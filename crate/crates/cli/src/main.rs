//! `geni-kit`: train, cross-validate, run baselines and predict node
//! importance on knowledge graphs.
//!
//! Exit status: 0 on success, 1 on runtime failures (I/O, malformed input,
//! diverged training), 2 on usage or validation errors.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use geni_core::{BaselineMethod, GeniError};

#[derive(Debug, Parser)]
#[command(name = "geni-kit", version, about = "Node importance estimation on knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write checkpoint, history and config echo.
    Train(TrainArgs),
    /// k-fold cross-validation; writes a metric report.
    Cv(CvArgs),
    /// Non-trainable baselines: pr, ppr, har, lid.
    Baseline(BaselineArgs),
    /// Score every node with a trained checkpoint.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Edge TSV `subject<TAB>predicate<TAB>object`.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Feature TSV; structural features are generated when omitted.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Known importance scores `node_name<TAB>score`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Number of folds [default: 5].
    #[arg(long)]
    pub folds: Option<usize>,
    /// Folds trained concurrently [default: 1].
    #[arg(long)]
    pub parallel_folds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub method: BaselineMethod,
    /// Seed scores for ppr and har.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Feature TSV; required unless the checkpoint was trained on structural features.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth scores; when given a metric report is written as well.
    #[arg(long)]
    pub eval_scores: Option<PathBuf>,
    /// Node names (one per line) for out-of-domain NDCG.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<GeniError> for CliError {
    fn from(e: GeniError) -> Self {
        match e {
            GeniError::InvalidArgument(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GENI_KIT_LOG", "warn")).init();
    let cli = Cli::parse();
    let name = match &cli.command {
        Command::Train(_) => "train",
        Command::Cv(_) => "cv",
        Command::Baseline(_) => "baseline",
        Command::Predict(_) => "predict",
    };
    let result = match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Cv(args) => commands::cv(args),
        Command::Baseline(args) => commands::baseline(args),
        Command::Predict(args) => commands::predict(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            let mut cmd = Cli::command();
            cmd.build();
            let usage = cmd
                .find_subcommand_mut(name)
                .expect("subcommand exists")
                .render_usage();
            eprintln!("error: {m}\n\n{usage}\n\nFor more information, try 'geni-kit {name} --help'.");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
