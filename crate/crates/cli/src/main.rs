//! `lesiontrack`: generate synthetic scan pairs, track lesions between scans,
//! score the result against ground truth and inspect per-vertex features.

mod commands;
mod exit;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lesiontrack_core::annotations::DEFAULT_SNAP_LIMIT_MM;
use lesiontrack_core::{GeodesicBackend, Method};

#[derive(Debug, Parser)]
#[command(name = "lesiontrack", version, about)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores). Results do not
    /// depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find each source lesion's position on the target scan.
    Correspond(CorrespondArgs),
    /// Score correspondence results against ground truth.
    Evaluate(EvaluateArgs),
    /// Write a synthetic scan pair with known correspondences.
    Synth(SynthArgs),
    /// Dump landmark features and texture descriptors of one vertex.
    Inspect(InspectArgs),
    /// Combine evaluation reports from several scan pairs.
    Aggregate(AggregateArgs),
}

#[derive(Debug, Args)]
struct MeshInput {
    /// Multiplies every coordinate (and annotation point) on load, e.g. 1000
    /// for scans in meters.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,

    /// Largest allowed distance (mm, after scaling) when snapping annotation
    /// points to vertices.
    #[arg(long, default_value_t = DEFAULT_SNAP_LIMIT_MM)]
    snap_limit: f64,
}

#[derive(Debug, Args)]
struct CorrespondArgs {
    /// Source scan (OBJ).
    #[arg(long)]
    source: PathBuf,
    /// Source landmarks and lesions of interest (JSON).
    #[arg(long)]
    source_annotations: PathBuf,
    /// Target scan (OBJ).
    #[arg(long)]
    target: PathBuf,
    /// Target landmarks, index-aligned with the source ones (JSON).
    #[arg(long)]
    target_landmarks: PathBuf,
    /// `key = value` pipeline configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = Method::Iterative)]
    mode: Method,
    #[command(flatten)]
    input: MeshInput,
    /// Results JSON.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Results JSON written by `correspond`.
    #[arg(long)]
    results: PathBuf,
    /// Ground-truth lesion positions on the target (JSON, `lesions` list).
    #[arg(long)]
    ground_truth: PathBuf,
    /// Target scan (OBJ).
    #[arg(long)]
    target: PathBuf,
    /// Success criteria in mm, comma separated (default 1..=50).
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<f64>,
    /// Geodesic backend for the error; defaults to the one in the results' config.
    #[arg(long)]
    backend: Option<GeodesicBackend>,
    #[command(flatten)]
    input: MeshInput,
    /// Report JSON.
    #[arg(long)]
    output: PathBuf,
    /// Success curve CSV (default: the report path with a `.csv` extension).
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Preset {
    Capsule,
    TwoLimb,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Generator spec (JSON); unset fields take their defaults.
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Capsule)]
    preset: Preset,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("which").required(true).args(["vertex", "lesion"]))]
struct InspectArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// Landmarks (and optionally lesions) on this mesh (JSON).
    #[arg(long)]
    landmarks: PathBuf,
    #[arg(long)]
    vertex: Option<usize>,
    /// A lesion label from the annotation file.
    #[arg(long)]
    lesion: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    input: MeshInput,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
    /// Write to a file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    /// Report JSON files written by `evaluate`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(exit::USAGE as u8);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }

    let result = match cli.command {
        Command::Correspond(a) => commands::correspond(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Synth(a) => commands::synth(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::Aggregate(a) => commands::aggregate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
