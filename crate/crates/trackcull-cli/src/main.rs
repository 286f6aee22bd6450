//! `trackcull`: simulate drift-chamber events, build datasets, train the
//! candidate classifiers, and benchmark classifier-assisted reconstruction
//! against the fit-everything baseline.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Anything a subcommand can fail with, bucketed by exit code:
/// bad flags exit 1, bad or missing data exit 2, internal faults exit 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(1),
            CliError::Data(_) => ExitCode::from(2),
            CliError::Internal(_) => ExitCode::from(3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, ValueEnum)]
pub enum LogLevel {
    /// Only errors.
    Quiet,
    /// Run summaries.
    Normal,
    /// Summaries plus extraction and skip accounting.
    Debug,
}

#[derive(Parser, Debug)]
#[command(
    name = "trackcull",
    version,
    about = "Track-candidate triage for a toy drift chamber"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for event-parallel stages; 0 means all cores.
    /// Benchmark timing always runs on one thread regardless.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Directory that relative output paths are created under.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Normal)]
    log_level: LogLevel,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic labeled events as JSONL.
    Simulate(SimulateArgs),
    /// Turn events into a labeled candidate dataset (CSV).
    Extract(ExtractArgs),
    /// Train a classifier on a dataset and save it as JSON.
    Train(TrainArgs),
    /// Score an evaluation dataset and report the metric suite.
    Evaluate(EvaluateArgs),
    /// Time conventional vs classifier-assisted reconstruction.
    Benchmark(BenchmarkArgs),
    /// Train one model per negative-sampling strategy and cross-evaluate.
    Study(StudyArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Number of events to generate.
    #[arg(long)]
    events: u64,
    /// True tracks per event.
    #[arg(long, default_value_t = 1)]
    tracks: u32,
    /// Poisson mean of fake clusters per super-layer.
    #[arg(long, default_value_t = 2.0)]
    noise_mean: f64,
    /// Lower edge of the uniform momentum draw, GeV.
    #[arg(long, default_value_t = 0.5)]
    momentum_min: f64,
    /// Upper edge of the uniform momentum draw, GeV.
    #[arg(long, default_value_t = 10.0)]
    momentum_max: f64,
    /// Track curvature is charge * curvature-scale / momentum.
    #[arg(long, default_value_t = 8.0)]
    curvature_scale: f64,
    /// Gaussian smearing of true cluster positions, in wires.
    #[arg(long, default_value_t = 0.3)]
    wire_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output event file (JSONL).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    /// Fake most similar to the true track.
    #[value(name = "closest", alias = "closest-neighbor")]
    Closest,
    /// Uniformly drawn fake.
    Random,
    /// Fake least similar to the true track.
    LeastLikely,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Balanced true/fake pairs for training.
    Training,
    /// One sample per event with every fake, for the metric suite.
    Evaluation,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Input event file (JSONL).
    #[arg(short, long)]
    input: PathBuf,
    /// How the fake row of each training pair is chosen.
    #[arg(long, value_enum, default_value_t = StrategyArg::Closest)]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Training)]
    mode: ModeArg,
    /// Seed for the random strategy's draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset (CSV).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Mlp,
    Ert,
}

/// Network shape and optimizer settings (mlp only).
#[derive(Args, Debug, Clone)]
struct MlpFlags {
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [64, 64, 64])]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Initial Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    /// Epochs without improvement before the learning rate drops.
    #[arg(long, default_value_t = 2)]
    lr_patience: usize,
    /// Multiplier applied to the learning rate when it drops.
    #[arg(long, default_value_t = 0.2)]
    lr_factor: f64,
    /// Training stops once the learning rate falls below this.
    #[arg(long, default_value_t = 1e-6)]
    min_lr: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Input training dataset (CSV).
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    model: ModelArg,
    #[command(flatten)]
    mlp: MlpFlags,
    /// Number of trees (ert only).
    #[arg(long, default_value_t = 300)]
    trees: usize,
    /// Smallest node still considered for splitting (ert only).
    #[arg(long, default_value_t = 2)]
    min_split: usize,
    /// Tree depth limit; 0 grows until pure (ert only).
    #[arg(long, default_value_t = 0)]
    max_depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model file (JSON).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Trained model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Evaluation dataset (CSV).
    #[arg(short, long)]
    input: PathBuf,
    /// A row is predicted valid when p_valid reaches this.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Output report (JSON).
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Trained model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Input event file (JSONL).
    #[arg(short, long)]
    input: PathBuf,
    /// Candidates scoring at least this get fitted on the assisted path.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Skip events where nothing passes instead of fitting the
    /// highest-scoring candidate.
    #[arg(long)]
    no_fallback: bool,
    /// Number of momentum bins in the efficiency report.
    #[arg(long, default_value_t = 9)]
    bins: usize,
    /// Lower edge of the momentum binning, GeV.
    #[arg(long, default_value_t = 0.5)]
    momentum_min: f64,
    /// Upper edge of the momentum binning, GeV.
    #[arg(long, default_value_t = 10.0)]
    momentum_max: f64,
    /// Wire noise the chi2 cut is derived from (cut = 3 sigma^2).
    #[arg(long, default_value_t = 0.3)]
    wire_sigma: f64,
    /// Explicit chi2 cut, overriding the sigma-derived default.
    #[arg(long)]
    chi2_cut: Option<f64>,
    #[arg(long, default_value_t = 8.0)]
    curvature_scale: f64,
    /// Output report (JSON); the CSV goes next to it.
    #[arg(short, long)]
    output: PathBuf,
    /// Per-bin CSV path; defaults to the JSON path with extension csv.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// Input event file (JSONL); first half trains, second half tests.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Seed for both dataset extractions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed for the shared network initialization.
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    #[command(flatten)]
    mlp: MlpFlags,
    /// Output report (JSON).
    #[arg(short, long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests arrive here too; only real parse
            // failures are usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
