//! `afromnist`: build synthetic numeral datasets from ten exemplar glyphs,
//! train and evaluate LeNet-5 on them, and inspect the result.

mod commands;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use afromnist_core::synthesis::CorruptionSpec;

#[derive(Debug, Parser)]
#[command(name = "afromnist", version, about)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "AFROMNIST_JOBS", value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize train and test IDX files from an exemplar set.
    Generate(GenerateArgs),
    /// Train LeNet-5 on a data directory and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a data directory.
    Eval(EvalArgs),
    /// Class-mean montage and per-image morphometrics for one split.
    Inspect(InspectArgs),
    /// Print the per-layer parameter counts of the network.
    Params,
}

fn multiple_of_ten(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if !n.is_multiple_of(10) {
        return Err(format!("{n} is not divisible by 10"));
    }
    Ok(n)
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{s} must be a finite value >= 0"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{s} must be a finite value > 0"))
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Directory holding the exemplar images.
    #[arg(long)]
    exemplars: PathBuf,
    /// CSV with columns label,glyph_name,file.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Dataset name used as the IDX file prefix.
    #[arg(long, default_value = "synthetic")]
    name: String,
    #[arg(long, default_value = "60000", value_parser = multiple_of_ten)]
    train: usize,
    #[arg(long, default_value = "10000", value_parser = multiple_of_ten)]
    test: usize,
    /// Displacement scale in pixels.
    #[arg(long, default_value = "8", value_parser = non_negative)]
    alpha: f64,
    /// Smoothing sigma range, sampled uniformly per image.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values = ["2", "2.5"], value_parser = positive)]
    gamma: Vec<f64>,
    /// Photometric corruption applied after deformation, e.g. blur:0.8.
    #[arg(long = "corrupt", value_name = "KIND:SEV")]
    corruptions: Vec<CorruptionSpec>,
    #[arg(long, default_value = "0")]
    seed: u64,
    /// Keep the class-major order instead of shuffling.
    #[arg(long)]
    no_shuffle: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch history CSV (default: <out>.history.csv).
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value = "0.001", value_parser = positive)]
    lr: f64,
    #[arg(long, default_value = "64", value_parser = clap::value_parser!(u32).range(1..))]
    batch: u32,
    #[arg(long, default_value = "20", value_parser = clap::value_parser!(u32).range(1..))]
    epochs: u32,
    /// Stop once the epoch loss improves by less than this.
    #[arg(long, default_value = "0.0001", value_parser = positive)]
    plateau: f64,
    #[arg(long, default_value = "0")]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "test"])]
    split: String,
    /// Confusion matrix CSV, rows are true labels.
    #[arg(long)]
    cm: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "train", value_parser = ["train", "test"])]
    split: String,
    /// Montage PGM of the ten class means.
    #[arg(long)]
    avg: Option<PathBuf>,
    /// Morphometric CSV, one row per image.
    #[arg(long)]
    morph: Option<PathBuf>,
    /// Exemplar directory; with --manifest, prints mean/exemplar correlations.
    #[arg(long, requires = "manifest")]
    exemplars: Option<PathBuf>,
    #[arg(long, requires = "exemplars")]
    manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Generate(g) = &cli.command {
        if g.gamma[0] > g.gamma[1] {
            use clap::CommandFactory;
            Cli::command()
                .error(
                    clap::error::ErrorKind::ValueValidation,
                    format!(
                        "--gamma LO HI needs LO <= HI, got {} {}",
                        g.gamma[0], g.gamma[1]
                    ),
                )
                .exit();
        }
    }
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.into())
            .build_global()
        {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Inspect(a) => commands::inspect(a),
        Command::Params => commands::params(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
