//! `hierseg` command-line interface. Every command resolves its settings
//! from defaults, an optional `--config` TOML file (table named after the
//! command), and flags, then writes the result to `<out>/config.toml`.

mod commands;
pub mod config;
pub mod run;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hierseg::analysis::GroupBy;
use hierseg::baselines::IdfVariant;
use hierseg::corpus::{QualityProfile, Target};
use hierseg::predictor::Task;
use hierseg::sqe::SqeMode;

pub use commands::{AnalyzeConfig, BaselineConfig, EvaluateConfig, GenCorpusConfig, RefineConfig, SweepConfig, TrainPredictorConfig};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "HIERSEG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hierseg", version, about = "Hierarchical scoring of long conversations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with planted segment qualities.
    GenCorpus(GenCorpusArgs),
    /// Fit and evaluate a tf-idf linear baseline.
    TrainBaseline(BaselineArgs),
    /// Run iterative label refinement and train the final predictor.
    Refine(RefineArgs),
    /// Train a predictor on a fixed encoder or on imported embeddings.
    TrainPredictor(TrainPredictorArgs),
    /// Score held-out sessions with a trained run.
    Evaluate(EvaluateArgs),
    /// One refinement run per segment length, plus an aggregate CSV.
    SweepM(SweepArgs),
    /// Attention traces, segment grouping, and keyword reports for a run.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config file; its table for this command is applied before flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct Data {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Held-out corpus; without it a seeded split of `--corpus` is used.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenCorpusArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub n_sessions: Option<usize>,
    #[arg(long, value_parser = parse_profile)]
    pub profile: Option<QualityProfile>,
    /// Label noise standard deviation in normalized units.
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Utterances per planted segment.
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: Data,
    #[arg(long, value_parser = parse_target)]
    pub code: Option<Target>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    #[arg(long, value_parser = parse_idf)]
    pub idf: Option<IdfVariant>,
    /// Penalty of the model chosen by `--task`.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_parser = parse_target)]
    pub code: Option<Target>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    /// Utterances per segment.
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: Data,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Label-update passes.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<SqeMode>,
    /// Also fine-tune on shifted segmentations.
    #[arg(long)]
    pub augment: Option<bool>,
}

#[derive(Debug, Args)]
pub struct TrainPredictorArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: Data,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Encoder checkpoint producing the segment embeddings.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Precomputed segment embeddings (JSONL).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory written by `refine` or `train-predictor`.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Evaluate on this corpus instead of the run's held-out sessions.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: Data,
    #[arg(long, value_parser = parse_target)]
    pub code: Option<Target>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    /// Comma-separated segment lengths.
    #[arg(long, value_delimiter = ',')]
    pub m_list: Option<Vec<usize>>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<SqeMode>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Planted-truth sidecar; adds planted-quality means per group.
    #[arg(long)]
    pub planted: Option<PathBuf>,
    /// Only sessions with exactly this many segments enter the traces.
    #[arg(long)]
    pub n_segments: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub words: Option<Vec<String>>,
    #[arg(long, value_parser = parse_group_by)]
    pub group_by: Option<GroupBy>,
}

fn parse_target(s: &str) -> Result<Target, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_task(s: &str) -> Result<Task, String> {
    match s {
        "regression" => Ok(Task::Regression),
        "classification" => Ok(Task::Classification),
        _ => Err(format!("unknown task {s:?} (regression, classification)")),
    }
}

fn parse_mode(s: &str) -> Result<SqeMode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_profile(s: &str) -> Result<QualityProfile, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown profile {s:?} (flat, early_peaked, late_peaked)"))
}

fn parse_idf(s: &str) -> Result<IdfVariant, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown idf variant {s:?} (plain, smooth, tf)"))
}

fn parse_group_by(s: &str) -> Result<GroupBy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown grouping {s:?} (corrected, raw)"))
}

/// Sizes the global thread pool from `HIERSEG_THREADS` when set.
fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
        anyhow::ensure!(n > 0, "{THREADS_ENV} must be positive");
        // A pool built earlier in the same process stays in effect.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::GenCorpus(a) => commands::gen_corpus(a),
        Command::TrainBaseline(a) => commands::train_baseline(a),
        Command::Refine(a) => commands::refine(a),
        Command::TrainPredictor(a) => commands::train_predictor(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::SweepM(a) => commands::sweep_m(a),
        Command::Analyze(a) => commands::analyze(a),
    }
}

/// Runs the CLI on an argument list (program name excluded).
pub fn run_args<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("hierseg")).chain(args.into_iter().map(Into::into));
    run(Cli::try_parse_from(argv)?)
}
