//! `activitymon`: one binary for every operator workflow.

// `!(x > 0.0)` is how parameter checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "activitymon",
    version,
    about = "Accelerometer activity analytics and monitoring"
)]
struct Cli {
    /// TOML configuration file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration value, e.g. `--set monitor.idle_timeout_s=600`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled synthetic corpus.
    Synth(SynthArgs),
    /// Fit the per-class activity mixtures on a corpus' training split.
    TrainActivity(TrainArgs),
    /// Fit the shock classifier on an event corpus.
    TrainShock(TrainArgs),
    /// Enroll the users of an auth corpus' training sessions.
    Enroll(EnrollArgs),
    /// Evaluate trained models on a corpus and write a report.
    Eval(EvalArgs),
    /// Run risky-event detection over one trace file.
    Detect(DetectArgs),
    /// Push a trace through the device pipeline, offline or into a server.
    Replay(ReplayArgs),
    /// Run the monitoring server.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RecipeName {
    Activities,
    Events,
    Auth,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    recipe: RecipeName,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus directory written by `synth`.
    #[arg(long)]
    corpus: PathBuf,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeatureSetArg {
    Combined,
    Motion,
    Audio,
}

impl From<FeatureSetArg> for activitymon_core::FeatureSet {
    fn from(f: FeatureSetArg) -> Self {
        match f {
            FeatureSetArg::Combined => Self::Combined,
            FeatureSetArg::Motion => Self::MotionOnly,
            FeatureSetArg::Audio => Self::AudioOnly,
        }
    }
}

#[derive(Debug, Args)]
struct EnrollArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `auth.feature_set`.
    #[arg(long, value_enum)]
    features: Option<FeatureSetArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    Activity,
    Events,
    Auth,
}

#[derive(Debug, Args)]
struct ModelPaths {
    /// Activity mixtures; defaults to `service.activity_models`.
    #[arg(long)]
    activity_models: Option<PathBuf>,
    /// Shock classifier; defaults to `service.shock_model`.
    #[arg(long)]
    shock_model: Option<PathBuf>,
    /// User identifier; defaults to `service.identifier`.
    #[arg(long)]
    identifier: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long)]
    corpus: PathBuf,
    /// Directory for `report.json` and `plot.dat`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    models: ModelPaths,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    ThreeStep,
    ImpactOnly,
}

impl From<ModeArg> for activitymon_core::DetectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ThreeStep => Self::ThreeStep,
            ModeArg::ImpactOnly => Self::ImpactOnly,
        }
    }
}

#[derive(Debug, Args)]
struct TraceInput {
    /// Trace file: header line then one sample per line.
    #[arg(long)]
    trace: PathBuf,
    /// Audio side file, one frame per line.
    #[arg(long)]
    audio: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    input: TraceInput,
    #[arg(long)]
    shock_model: Option<PathBuf>,
    /// Overrides `monitor.detection_mode`.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Alarm file (JSON lines); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    /// A fresh in-process pipeline.
    Offline,
    /// The server at `service.ingest_addr` and `service.http_addr`.
    Serve,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[command(flatten)]
    input: TraceInput,
    #[arg(long, value_enum, default_value_t = Target::Offline)]
    against: Target,
    /// Device to replay as; defaults to the trace header's device id.
    #[arg(long)]
    device: Option<String>,
    /// Device token; defaults to the token in the config file.
    #[arg(long)]
    token: Option<String>,
    #[command(flatten)]
    models: ModelPaths,
    /// Risky-event alarms (JSON lines); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full device log of an offline run.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    models: ModelPaths,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = matches!(cli.command, Command::Serve(_));
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(if verbose { "info" } else { "warn" })),
        )
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("activitymon: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = settings::resolve(cli.config.as_deref(), &cli.overrides)?;
    eprintln!("# resolved configuration\n{}", cfg.to_toml());
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::TrainActivity(a) => commands::train_activity(&cfg, a),
        Command::TrainShock(a) => commands::train_shock(&cfg, a),
        Command::Enroll(a) => commands::enroll(&cfg, a),
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::Detect(a) => commands::detect(&cfg, a),
        Command::Replay(a) => commands::replay(&cfg, a),
        Command::Serve(a) => commands::serve(cfg, a),
    }
}
