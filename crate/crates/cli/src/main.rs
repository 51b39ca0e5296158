//! `fts`: batch driver for simulation, tokenization, training, federation,
//! zero-shot inference, evaluation and scoring.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "fts", version, about = "Federated timeline synthesis pipeline")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a cohort from a ground-truth process.
    Simulate(SimulateArgs),
    /// Fit the tokenizer on an event stream and write the PHT corpus.
    Tokenize(TokenizeArgs),
    /// Train a generator on a PHT corpus.
    Train(TrainArgs),
    /// Run the two-stage federated protocol described by a scenario file.
    Federate(FederateArgs),
    /// Zero-shot estimates for every patient that reaches the task anchor.
    Infer(InferArgs),
    /// Metrics and calibration data from estimate files.
    Evaluate(EvaluateArgs),
    /// Overall score from metric files.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Process specification (TOML). The built-in clinic-v1 process is used when omitted.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for `events.jsonl`, `truth.jsonl` and `process.toml`.
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    /// Event stream (JSONL).
    #[arg(long)]
    pub events: std::path::PathBuf,
    /// Tokenizer settings (TOML: `quantiles`, `code_levels`).
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Also split the cohort into this many contiguous, disjoint shards.
    #[arg(long, default_value_t = 1)]
    pub shards: usize,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: std::path::PathBuf,
    #[arg(long)]
    pub vocab: std::path::PathBuf,
    /// Training configuration (TOML); defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Overrides the configured training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args)]
pub struct FederateArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: std::path::PathBuf,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: std::path::PathBuf,
    #[arg(long)]
    pub vocab: std::path::PathBuf,
    /// Tokenizer settings JSON, needed for regression tasks.
    #[arg(long)]
    pub tokenizer: Option<std::path::PathBuf>,
    #[arg(long)]
    pub corpus: std::path::PathBuf,
    /// Patient ids, one per line, aligned with the corpus.
    #[arg(long)]
    pub patients: Option<std::path::PathBuf>,
    /// Task file (TOML).
    #[arg(long)]
    pub config: std::path::PathBuf,
    /// Truth sidecar from `simulate`; enables ground-truth labels.
    #[arg(long)]
    pub truth: Option<std::path::PathBuf>,
    /// Process the truth sidecar was sampled from (defaults to clinic-v1).
    #[arg(long)]
    pub process: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub label_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Accept a checkpoint trained against a different vocabulary.
    #[arg(long)]
    pub allow_fingerprint_mismatch: bool,
    /// Estimates CSV path.
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `method=path` pairs naming estimate files.
    #[arg(long = "estimates", required = true, value_parser = parse_named)]
    pub estimates: Vec<(String, std::path::PathBuf)>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Metric CSV files; rows are pooled by method.
    #[arg(long = "metrics", required = true)]
    pub metrics: Vec<std::path::PathBuf>,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

fn parse_named(s: &str) -> Result<(String, std::path::PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), path.into())),
        _ => Err(format!("expected METHOD=PATH, got `{s}`")),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::BadConfig("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::BadConfig(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Tokenize(a) => commands::tokenize(&a),
        Command::Train(a) => commands::train(&a),
        Command::Federate(a) => commands::federate(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Score(a) => commands::score(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FTS_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error[{}]: {message}", e.category());
            ExitCode::FAILURE
        }
    }
}
