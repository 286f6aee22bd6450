//! Subcommand implementations. Each one reads its inputs, calls into the
//! library, writes a primary output plus a manifest, and prints a short
//! summary on stdout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use trackcull::core::{self, CoreError};
use trackcull::dataset::{self, DatasetError, ExtractionMode, NegativeStrategy};
use trackcull::metrics::{self, MetricsError};
use trackcull::models::{self, ert, mlp, Model, ModelError};
use trackcull::pipeline::{self, FitConfig, PipelineError};
use trackcull::simgen::{self, SimConfig, SimError};
use trackcull::study::{self, StudyConfig, StudyError};

use crate::manifest::{self, CommandLine};
use crate::{
    BenchmarkArgs, Cli, CliError, Command, EvaluateArgs, ExtractArgs, LogLevel, MlpFlags, ModeArg,
    ModelArg, SimulateArgs, StrategyArg, StudyArgs, TrainArgs,
};

pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Internal(format!("cannot size the thread pool: {e}")))?;
    }
    let ctx = Ctx {
        out_dir: cli.out_dir,
        log_level: cli.log_level,
    };
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&ctx, args),
        Command::Extract(args) => cmd_extract(&ctx, args),
        Command::Train(args) => cmd_train(&ctx, args),
        Command::Evaluate(args) => cmd_evaluate(&ctx, args),
        Command::Benchmark(args) => cmd_benchmark(&ctx, args),
        Command::Study(args) => cmd_study(&ctx, args),
    }
}

struct Ctx {
    out_dir: PathBuf,
    log_level: LogLevel,
}

impl Ctx {
    /// Place a relative output path under `--out-dir`. The default out-dir
    /// is left off entirely so manifests record the path exactly as given
    /// and replaying one reproduces it byte for byte.
    fn resolve_output(&self, path: &Path) -> Result<PathBuf, CliError> {
        let resolved = if path.is_absolute() || self.out_dir == Path::new(".") {
            path.to_path_buf()
        } else {
            self.out_dir.join(path)
        };
        if let Some(parent) = resolved.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| {
                    CliError::Data(format!("cannot create {}: {e}", parent.display()))
                })?;
            }
        }
        Ok(resolved)
    }

    fn say(&self, message: std::fmt::Arguments<'_>) {
        if self.log_level >= LogLevel::Normal {
            println!("{message}");
        }
    }

    fn debug(&self, message: std::fmt::Arguments<'_>) {
        if self.log_level >= LogLevel::Debug {
            println!("{message}");
        }
    }
}

fn map_sim(e: SimError) -> CliError {
    match e {
        SimError::InvalidConfig { .. } => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn map_core(e: CoreError) -> CliError {
    CliError::Data(e.to_string())
}

fn map_dataset(e: DatasetError) -> CliError {
    CliError::Data(e.to_string())
}

fn map_model(e: ModelError) -> CliError {
    match e {
        ModelError::BadHyperparams { .. } => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn map_metrics(e: MetricsError) -> CliError {
    match e {
        MetricsError::BadThreshold { .. } | MetricsError::TooFewRepetitions { .. } => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Data(other.to_string()),
    }
}

fn map_pipeline(e: PipelineError) -> CliError {
    match e {
        PipelineError::BadThreshold { .. } | PipelineError::BadBins { .. } => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Data(other.to_string()),
    }
}

fn map_study(e: StudyError) -> CliError {
    match e {
        StudyError::Model(inner) => map_model(inner),
        StudyError::Metrics(inner) => map_metrics(inner),
        StudyError::Dataset(inner) => map_dataset(inner),
        other => CliError::Data(other.to_string()),
    }
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("report serialization failed: {e}")))?;
    body.push('\n');
    fs::write(path, body).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn cmd_simulate(ctx: &Ctx, args: SimulateArgs) -> Result<(), CliError> {
    let config = SimConfig {
        n_events: args.events,
        tracks_per_event: args.tracks,
        noise_mean: args.noise_mean,
        momentum_min: args.momentum_min,
        momentum_max: args.momentum_max,
        curvature_scale: args.curvature_scale,
        wire_noise_sigma: args.wire_sigma,
        seed: args.seed,
    };
    let events = simgen::generate_events(&config).map_err(map_sim)?;
    let output = ctx.resolve_output(&args.output)?;
    core::write_events_file(&output, &events).map_err(map_core)?;

    // Candidate counts are the per-layer cluster-count product; report the
    // mean so a run's combinatorial load is visible up front.
    let mean_candidates = if events.is_empty() {
        0.0
    } else {
        events
            .iter()
            .map(|e| e.clusters.iter().map(|c| c.len() as f64).product::<f64>())
            .sum::<f64>()
            / events.len() as f64
    };

    let command = CommandLine::new("simulate")
        .flag("--events", config.n_events)
        .flag("--tracks", config.tracks_per_event)
        .flag("--noise-mean", config.noise_mean)
        .flag("--momentum-min", config.momentum_min)
        .flag("--momentum-max", config.momentum_max)
        .flag("--curvature-scale", config.curvature_scale)
        .flag("--wire-sigma", config.wire_noise_sigma)
        .flag("--seed", config.seed)
        .flag_path("--output", &output);
    manifest::write_manifest(&output, command, vec![output.clone()])?;

    ctx.say(format_args!(
        "simulate: wrote {} events to {} (mean {:.2} candidates/event)",
        events.len(),
        output.display(),
        mean_candidates
    ));
    Ok(())
}

fn strategy_of(arg: StrategyArg) -> NegativeStrategy {
    match arg {
        StrategyArg::Closest => NegativeStrategy::ClosestNeighbor,
        StrategyArg::Random => NegativeStrategy::Random,
        StrategyArg::LeastLikely => NegativeStrategy::LeastLikely,
    }
}

fn cmd_extract(ctx: &Ctx, args: ExtractArgs) -> Result<(), CliError> {
    let events = core::read_events_file(&args.input).map_err(map_core)?;
    let strategy = strategy_of(args.strategy);
    let (mode, mode_name) = match args.mode {
        ModeArg::Training => (ExtractionMode::Training, "training"),
        ModeArg::Evaluation => (ExtractionMode::Evaluation, "evaluation"),
    };
    let (dataset, summary) =
        dataset::extract_dataset(&events, strategy, mode, args.seed).map_err(map_dataset)?;
    let output = ctx.resolve_output(&args.output)?;
    dataset::write_dataset_file(&output, &dataset).map_err(map_dataset)?;

    let command = CommandLine::new("extract")
        .flag_path("--input", &args.input)
        .flag("--strategy", strategy)
        .flag("--mode", mode_name)
        .flag("--seed", args.seed)
        .flag_path("--output", &output);
    manifest::write_manifest(&output, command, vec![output.clone()])?;

    ctx.say(format_args!(
        "extract: {} samples, {} rows ({} valid / {} fake) to {}",
        summary.n_samples,
        summary.n_rows,
        summary.n_valid_rows,
        summary.n_invalid_rows,
        output.display()
    ));
    ctx.debug(format_args!(
        "extract: skipped {} events without truth, {} without fakes, {} with several tracks",
        summary.n_skipped_no_truth, summary.n_skipped_no_negative, summary.n_skipped_multi_truth
    ));
    Ok(())
}

fn mlp_hyperparams(flags: &MlpFlags, seed: u64) -> mlp::MlpHyperparams {
    mlp::MlpHyperparams {
        hidden_layers: flags.hidden.clone(),
        batch_size: flags.batch_size,
        initial_lr: flags.lr,
        beta1: flags.beta1,
        beta2: flags.beta2,
        epsilon: flags.epsilon,
        max_epochs: flags.max_epochs,
        lr_patience: flags.lr_patience,
        lr_factor: flags.lr_factor,
        min_lr: flags.min_lr,
        seed,
    }
}

fn mlp_command_flags(command: CommandLine, flags: &MlpFlags) -> CommandLine {
    command
        .list("--hidden", &flags.hidden)
        .flag("--batch-size", flags.batch_size)
        .flag("--lr", flags.lr)
        .flag("--beta1", flags.beta1)
        .flag("--beta2", flags.beta2)
        .flag("--epsilon", flags.epsilon)
        .flag("--max-epochs", flags.max_epochs)
        .flag("--lr-patience", flags.lr_patience)
        .flag("--lr-factor", flags.lr_factor)
        .flag("--min-lr", flags.min_lr)
}

fn cmd_train(ctx: &Ctx, args: TrainArgs) -> Result<(), CliError> {
    let dataset = dataset::read_dataset_file(&args.input).map_err(map_dataset)?;
    let rows: Vec<dataset::DatasetRow> = dataset.iter_rows().cloned().collect();
    let output = ctx.resolve_output(&args.output)?;

    let mut command = CommandLine::new("train")
        .flag_path("--input", &args.input)
        .flag("--model", match args.model {
            ModelArg::Mlp => "mlp",
            ModelArg::Ert => "ert",
        });
    let (model, training_accuracy) = match args.model {
        ModelArg::Mlp => {
            let hyperparams = mlp_hyperparams(&args.mlp, args.seed);
            command = mlp_command_flags(command, &args.mlp);
            let model = mlp::train(&rows, &hyperparams).map_err(map_model)?;
            let accuracy = model.meta().training_accuracy;
            (Model::Mlp(model), accuracy)
        }
        ModelArg::Ert => {
            let hyperparams = ert::ErtHyperparams {
                n_estimators: args.trees,
                min_samples_split: args.min_split,
                max_depth: (args.max_depth > 0).then_some(args.max_depth as u32),
                seed: args.seed,
            };
            command = command
                .flag("--trees", args.trees)
                .flag("--min-split", args.min_split)
                .flag("--max-depth", args.max_depth);
            let model = ert::train(&rows, &hyperparams).map_err(map_model)?;
            let accuracy = model.meta().training_accuracy;
            (Model::Ert(model), accuracy)
        }
    };
    models::save_model_file(&output, &model).map_err(map_model)?;

    command = command
        .flag("--seed", args.seed)
        .flag_path("--output", &output);
    manifest::write_manifest(&output, command, vec![output.clone()])?;

    ctx.say(format_args!(
        "train: {} on {} rows, training accuracy {:.4}, saved to {}",
        model.kind(),
        rows.len(),
        training_accuracy,
        output.display()
    ));
    Ok(())
}

/// Evaluation report as written to disk: the metric suite plus enough
/// context to read it standalone.
#[derive(Serialize)]
struct EvaluateOutput<'a> {
    model_kind: &'a str,
    threshold: f64,
    training_accuracy: f64,
    #[serde(flatten)]
    report: &'a metrics::EvalReport,
}

fn training_accuracy_of(model: &Model) -> f64 {
    match model {
        Model::Mlp(m) => m.meta().training_accuracy,
        Model::Ert(m) => m.meta().training_accuracy,
    }
}

fn cmd_evaluate(ctx: &Ctx, args: EvaluateArgs) -> Result<(), CliError> {
    let model = models::load_model_file(&args.model).map_err(map_model)?;
    let dataset = dataset::read_dataset_file(&args.input).map_err(map_dataset)?;
    let report = metrics::evaluate(&model, &dataset, args.threshold).map_err(map_metrics)?;
    let training_accuracy = training_accuracy_of(&model);

    let output = ctx.resolve_output(&args.output)?;
    write_json_file(
        &output,
        &EvaluateOutput {
            model_kind: model.kind(),
            threshold: args.threshold,
            training_accuracy,
            report: &report,
        },
    )?;

    let command = CommandLine::new("evaluate")
        .flag_path("--model", &args.model)
        .flag_path("--input", &args.input)
        .flag("--threshold", args.threshold)
        .flag_path("--output", &output);
    manifest::write_manifest(&output, command, vec![output.clone()])?;

    if ctx.log_level >= LogLevel::Normal {
        print!("{}", report.render_table(Some(training_accuracy)));
    }
    ctx.say(format_args!("evaluate: report saved to {}", output.display()));
    Ok(())
}

/// Benchmark report as written to disk: the path comparison plus the
/// settings that shaped it.
#[derive(Serialize)]
struct BenchmarkOutput<'a> {
    model_kind: &'a str,
    threshold: f64,
    fallback: bool,
    fit: FitConfig,
    #[serde(flatten)]
    report: &'a pipeline::EfficiencyReport,
}

fn cmd_benchmark(ctx: &Ctx, args: BenchmarkArgs) -> Result<(), CliError> {
    let model = models::load_model_file(&args.model).map_err(map_model)?;
    let events = core::read_events_file(&args.input).map_err(map_core)?;
    let fit = FitConfig {
        chi2_cut: args
            .chi2_cut
            .unwrap_or(3.0 * args.wire_sigma * args.wire_sigma),
        curvature_scale: args.curvature_scale,
    };
    let edges = pipeline::momentum_bin_edges(args.momentum_min, args.momentum_max, args.bins)
        .map_err(map_pipeline)?;
    let fallback = !args.no_fallback;

    // Wall-clock comparisons only mean something when both passes run the
    // same way, so the benchmark gets its own single-threaded pool no
    // matter what --threads says.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| CliError::Internal(format!("cannot build the benchmark pool: {e}")))?;
    let report = pool.install(|| -> Result<_, CliError> {
        let conventional = pipeline::run_conventional(&events, &fit).map_err(map_pipeline)?;
        let assisted = pipeline::run_ai_assisted(&events, &model, args.threshold, &fit, fallback)
            .map_err(map_pipeline)?;
        pipeline::compare(&assisted, &conventional, &events, &edges).map_err(map_pipeline)
    })?;

    let output = ctx.resolve_output(&args.output)?;
    let csv_path = match &args.csv {
        Some(path) => ctx.resolve_output(path)?,
        None => output.with_extension("csv"),
    };
    write_json_file(
        &output,
        &BenchmarkOutput {
            model_kind: model.kind(),
            threshold: args.threshold,
            fallback,
            fit,
            report: &report,
        },
    )?;
    fs::write(&csv_path, report.to_csv())
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", csv_path.display())))?;

    let command = CommandLine::new("benchmark")
        .flag_path("--model", &args.model)
        .flag_path("--input", &args.input)
        .flag("--threshold", args.threshold)
        .switch("--no-fallback", args.no_fallback)
        .flag("--bins", args.bins)
        .flag("--momentum-min", args.momentum_min)
        .flag("--momentum-max", args.momentum_max)
        .flag("--chi2-cut", fit.chi2_cut)
        .flag("--curvature-scale", fit.curvature_scale)
        .flag_path("--output", &output)
        .flag_path("--csv", &csv_path);
    manifest::write_manifest(&output, command, vec![output.clone(), csv_path.clone()])?;

    let reduction = report
        .candidate_reduction
        .map_or("n/a".to_string(), |r| format!("{r:.2}x"));
    ctx.say(format_args!(
        "benchmark: speedup {:.2}x on {} thread(s), fit reduction {}, {} events",
        report.speedup, report.ai_assisted.threads, reduction, report.conventional.n_events
    ));
    ctx.say(format_args!(
        "benchmark: report saved to {}, bins to {}",
        output.display(),
        csv_path.display()
    ));
    Ok(())
}

fn cmd_study(ctx: &Ctx, args: StudyArgs) -> Result<(), CliError> {
    let events = core::read_events_file(&args.input).map_err(map_core)?;
    let config = StudyConfig {
        hyperparams: mlp_hyperparams(&args.mlp, args.model_seed),
        threshold: args.threshold,
        seed: args.seed,
    };
    let report = study::run_study(&events, &config).map_err(map_study)?;

    let output = ctx.resolve_output(&args.output)?;
    write_json_file(&output, &report)?;

    let command = mlp_command_flags(
        CommandLine::new("study")
            .flag_path("--input", &args.input)
            .flag("--threshold", args.threshold)
            .flag("--seed", args.seed)
            .flag("--model-seed", args.model_seed),
        &args.mlp,
    )
    .flag_path("--output", &output);
    manifest::write_manifest(&output, command, vec![output.clone()])?;

    if ctx.log_level >= LogLevel::Normal {
        print!("{}", report.render_table());
    }
    ctx.say(format_args!("study: report saved to {}", output.display()));
    Ok(())
}
