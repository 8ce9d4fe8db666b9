//! `meshmark` command-line tool.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "meshmark", version, about = "Deep robust watermarking of triangle meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset of deformed icospheres.
    Synth(SynthArgs),
    /// Train embedder and extractor on a directory of OBJ meshes.
    Train(TrainArgs),
    /// Embed a watermark into a mesh.
    Embed(EmbedArgs),
    /// Blindly extract a watermark from a mesh.
    Extract(ExtractArgs),
    /// Apply one attack at a fixed intensity.
    Attack(AttackArgs),
    /// Robustness sweep over attack intensities.
    Sweep(SweepArgs),
    /// Distortion between two meshes with the same vertex order.
    Metrics(MetricsArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Icosphere subdivision level (1-5).
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..=5))]
    level: u32,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 0.2)]
    amplitude: f64,
    #[arg(long, default_value_t = 3)]
    frequency: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory of OBJ files.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory receiving `checkpoint.mmk`, `train_log.csv` and `run.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON or TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Watermark length L.
    #[arg(long)]
    bits: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_w: Option<f64>,
    #[arg(long)]
    lambda_cur: Option<f64>,
    #[arg(long)]
    lambda_m: Option<f64>,
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
    /// Train with the identity attack only.
    #[arg(long)]
    no_attack_layers: bool,
    /// Sum neighbor features instead of averaging them.
    #[arg(long)]
    no_degree_norm: bool,
    #[arg(long)]
    no_batch_norm: bool,
    #[arg(long)]
    no_curvature_loss: bool,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Watermark as L/4 hex digits, most significant bit first.
    #[arg(long, conflicts_with = "random", required_unless_present = "random")]
    bits: Option<String>,
    /// Draw the watermark from `--seed`.
    #[arg(long, requires = "seed")]
    random: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Sidecar JSON path (default: `<output>.json`).
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// JSON report with the decoded bits and raw per-bit outputs.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Axis {
    X,
    Y,
    Z,
    /// The same angle about x, y and z.
    All,
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// identity, rotation, noise, smoothing or cropping.
    #[arg(long)]
    kind: String,
    /// Rotation angle in degrees.
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long, value_enum, default_value_t = Axis::All)]
    axis: Axis,
    /// Noise standard deviation (unit-cube frame).
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    /// Smoothing strength.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Retained vertex fraction.
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory of OBJ test meshes.
    #[arg(long)]
    data: PathBuf,
    /// CSV destination (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rotation angles in degrees, replacing the default grid.
    #[arg(long, value_delimiter = ',')]
    rotation: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    smoothing: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    cropping: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    reference: PathBuf,
    other: PathBuf,
    /// JSON destination (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of per-vertex displacements.
    #[arg(long)]
    per_vertex: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Embed(a) => commands::embed(a),
        Command::Extract(a) => commands::extract(a),
        Command::Attack(a) => commands::attack(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Metrics(a) => commands::metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
