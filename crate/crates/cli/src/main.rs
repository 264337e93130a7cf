//! `curriculum`: score, schedule, train and compare curriculum strategies
//! on labelled text.

mod commands;
mod output;
mod settings;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use curriculum_core::samplers::Strategy;

use settings::Layer;

/// Bad invocation: exits with status 2 like clap's own usage errors.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "curriculum",
    version,
    about = "Self-adaptive curriculum learning toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write `{id, probs, score}` difficulty records for a dataset.
    Score(ScoreArgs),
    /// Dump the epoch plans a training run would use.
    Plan(PlanArgs),
    /// Train one strategy for every configured seed.
    Train(TrainArgs),
    /// Select k examples per strategy and train on them alone.
    Fewshot(FewshotArgs),
    /// Bin score files into histograms, optionally split by correctness.
    Analyze(AnalyzeArgs),
    /// Run the full strategy × seed grid and aggregate test metrics.
    Compare(CompareArgs),
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: curriculum_core::Error| e.to_string())
}

/// Input data: either one file split 80/10/10, or explicit splits.
#[derive(Args, Clone, Default)]
pub struct DataArgs {
    /// Single dataset (.jsonl or .csv); split stratified 80/10/10 when a
    /// command needs validation and test data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, conflicts_with = "data")]
    pub train: Option<PathBuf>,
    #[arg(long, conflicts_with = "data")]
    pub val: Option<PathBuf>,
    #[arg(long, conflicts_with = "data")]
    pub test: Option<PathBuf>,
    /// Number of classes.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Seed of the stratified split of --data.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Joint token budget per example.
    #[arg(long)]
    pub max_tokens: Option<usize>,
}

#[derive(Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML config with flat keys such as `train.epochs`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed; repeat for several runs.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    /// External `{id, probs}` JSONL instead of the probe scorer.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub probe_fraction: Option<f64>,
    #[arg(long)]
    pub probe_epochs: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Default)]
pub struct TrainingArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Re-score the training split after every epoch and emit histograms.
    #[arg(long)]
    pub rescore: bool,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub bins: Option<u64>,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
}

#[derive(Args)]
pub struct FewshotArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    /// Examples to select (default 64).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Score JSONL files; the n-th file is tagged epoch n-1.
    #[arg(long = "scores", required = true)]
    pub scores: Vec<PathBuf>,
    /// `{id, predicted, label}` JSONL: one for all score files or one each.
    #[arg(long = "predictions")]
    pub predictions: Vec<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub bins: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Strategies to compare; repeat or separate with commas.
    #[arg(long = "strategy", value_delimiter = ',', value_parser = parse_strategy)]
    pub strategies: Vec<Strategy>,
    /// Grid cells run in parallel.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl DataArgs {
    fn layer(&self) -> Layer {
        Layer {
            class_count: self.classes,
            split_seed: self.split_seed,
            max_tokens: self.max_tokens,
            ..Default::default()
        }
    }
}

impl CommonArgs {
    fn layer(&self) -> Layer {
        Layer {
            seeds: (!self.seeds.is_empty()).then(|| self.seeds.clone()),
            scores: self.scores.clone(),
            probe_fraction: self.probe_fraction,
            probe_epochs: self.probe_epochs,
            ..Default::default()
        }
    }
}

impl TrainingArgs {
    fn layer(&self) -> Layer {
        Layer {
            epochs: self.epochs,
            batch_size: self.batch_size,
            rescore: self.rescore.then_some(true),
            bins: self.bins.map(|b| b as usize),
            ..Default::default()
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Score(a) => commands::score(&a),
        Command::Plan(a) => commands::plan(&a),
        Command::Train(a) => commands::train(&a),
        Command::Fewshot(a) => commands::fewshot(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Compare(a) => commands::compare(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
