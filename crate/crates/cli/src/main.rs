use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use seizure_core::eval::Backend;
use seizure_core::features::FeatureKind;
use seizure_core::Error;

mod commands;
mod config;
mod output;

#[derive(Debug, Parser)]
#[command(
    name = "seizure-sim",
    version,
    about = "Analog seizure-detection data path simulator"
)]
struct Cli {
    /// Seed for synthesis, fold assignment, bitstreams and the GA.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for this run.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// JSON run configuration; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_backend)]
    backend: Option<Backend>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Omit the creation time from manifest.json.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic recording.
    Synth(SynthArgs),
    /// Load a recording, optionally re-reference it, and summarize it.
    Ingest(IngestArgs),
    /// Tabulate per-window feature values and optional full traces.
    Features(FeaturesArgs),
    /// Cross-validate single members (sweep) or one combination.
    Eval(EvalArgs),
    /// Exhaustive pair search followed by the genetic search.
    Optimize(OptimizeArgs),
    /// Power and battery-life scenarios.
    Power(PowerArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    TenTwenty,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    duration_s: Option<f64>,
    /// Also write an EDF copy.
    #[arg(long)]
    edf: bool,
    /// File stem of the written recording.
    #[arg(long, default_value = "recording")]
    name: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Edf,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Recording in CSV or EDF.
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Label file; defaults to `<stem>.labels.json` beside the input.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MontageArg {
    Tcp,
    None,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    montage: Option<MontageArg>,
    /// Minimum contiguous seconds of each state for inclusion.
    #[arg(long, default_value_t = 60.0)]
    min_labeled_s: f64,
    /// Fail when the recording does not meet the inclusion rule.
    #[arg(long)]
    require_inclusion: bool,
}

#[derive(Debug, Args)]
struct SelectionArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_feature)]
    features: Option<Vec<FeatureKind>>,
    /// Channel names or indices.
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    select: SelectionArgs,
    #[arg(long)]
    tau_s: Option<f64>,
    /// Use ideal per-window values instead of the analog trace.
    #[arg(long)]
    windowed: bool,
    /// Write the full streaming trace of every member.
    #[arg(long)]
    traces: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    select: SelectionArgs,
    /// Evaluate one combination (`feature:channel,...`) instead of a sweep.
    #[arg(long, value_delimiter = ',')]
    combo: Option<Vec<String>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    lut_levels: Option<usize>,
    #[arg(long)]
    stream_bits: Option<usize>,
    #[arg(long)]
    windowed: bool,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    select: SelectionArgs,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    combo_size: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    mutation_rate: Option<f64>,
    #[arg(long)]
    elitism: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FeaturePowerArg {
    Average,
    Max,
}

#[derive(Debug, Args)]
struct PowerArgs {
    #[arg(long)]
    lut_levels: Option<usize>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long, value_enum)]
    feature_power: Option<FeaturePowerArg>,
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_feature(s: &str) -> Result<FeatureKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// 1 = bad input, 2 = insufficient data, 3 = internal failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_insufficient_data() => 2,
        Some(e) if e.is_input_error() => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
