//! `hypee`: batch runs for training, calibration, triggered inference and
//! embedding analyses. Exit codes: 0 success, 2 usage, 3 data, 4 numeric.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "hypee", version, about = "Hyperbolic early-exit training, triggering and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; receives resolved_config.toml and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint.json, metrics.jsonl and the data splits.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Fit gate norm statistics on a labeled reference CSV.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Run triggered inference over a labeled CSV.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Required by the norm strategies.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = StrategyArg::Class)]
        strategy: StrategyArg,
        /// Exit used by the fixed strategy.
        #[arg(long, default_value_t = 0)]
        exit: usize,
        /// Entropy thresholds, one per early exit; defaults to the config's.
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
    },
    /// Export every exit embedding of a labeled CSV.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Geometric analyses of embedding files.
    Analyze {
        #[command(subcommand)]
        analysis: Analysis,
    },
    /// Latent-dimension ablation on synthetic data.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    /// Global then per-class norm gate.
    Class,
    /// Global norm gate only.
    Global,
    /// Softmax entropy thresholds.
    Entropy,
    /// Always leave at `--exit`.
    Fixed,
}

#[derive(Subcommand)]
pub enum Analysis {
    /// δ-hyperbolicity, relative δ and the implied curvature.
    Delta {
        #[command(flatten)]
        common: Common,
        /// Square distance matrix CSV without header.
        #[arg(long, conflicts_with = "embeddings", required_unless_present = "embeddings")]
        distances: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Keep only these exit ids.
        #[arg(long, value_delimiter = ',')]
        exits: Vec<u32>,
        /// Subset size for subsampled estimates; all points when absent.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Also write layer_delta.csv: each exit alone and each pair of exits
        /// together, subsampled to --sample points (default 100).
        #[arg(long, requires = "embeddings")]
        layers: bool,
        /// Also print the report to stdout.
        #[arg(long)]
        stdout: bool,
    },
    /// Hyperbolic k-means with Lorentzian centroids.
    Kmeans {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long)]
        stdout: bool,
    },
    /// Retrieval of deeper-exit references inside relaxed entailment cones.
    Lookahead {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        references: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1.2, 1.5, 2.0])]
        thresholds: Vec<f64>,
        /// Use only queries from this exit.
        #[arg(long, default_value_t = 0)]
        query_exit: u32,
        #[arg(long)]
        stdout: bool,
    },
    /// Path from one embedding toward the root with nearest references.
    Traverse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        references: PathBuf,
        /// File holding the start embedding; defaults to the references.
        #[arg(long)]
        start: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = hypee::analysis::DEFAULT_STEPS)]
        steps: usize,
        #[arg(long)]
        stdout: bool,
    },
    /// Per-exit histogram of embedding norms.
    Hist {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long)]
        stdout: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { common } => commands::train(&common),
        Command::Calibrate {
            common,
            checkpoint,
            reference,
        } => commands::calibrate(&common, &checkpoint, &reference),
        Command::Infer {
            common,
            checkpoint,
            data,
            stats,
            strategy,
            exit,
            thresholds,
        } => commands::infer(&common, &checkpoint, &data, stats.as_deref(), strategy, exit, thresholds),
        Command::Embed { common, checkpoint, data } => commands::embed(&common, &checkpoint, &data),
        Command::Analyze { analysis } => commands::analyze(analysis),
        Command::Ablate { common } => commands::ablate(&common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
