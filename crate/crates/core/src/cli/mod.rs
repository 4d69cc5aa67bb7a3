//! The `tcdtrack` command line.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid configuration or usage,
//! 3 missing frames, 4 latent-size or shape mismatch against a checkpoint,
//! 5 wrong frame count for forecasting, 6 result/ground-truth misalignment.

mod artifacts;
mod commands;
pub mod config;
mod ingest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use artifacts::{RunManifest, LOCK_FILE, MANIFEST_FILE};
pub use commands::score_model;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING_FRAMES: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;
pub const EXIT_FORECAST_FRAMES: i32 = 5;
pub const EXIT_MISALIGNED: i32 = 6;

#[derive(Debug, Parser)]
#[command(
    name = "tcdtrack",
    version,
    about = "Unsupervised dense tracking of deforming point-cloud sequences"
)]
struct Cli {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML (or .json) config for the subcommand; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress output on stdout.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset with ground-truth correspondences.
    Generate,
    /// Train the decoder, temporal weight and per-window states.
    Train {
        /// Dataset root: sequence directories, or a variant directory of one.
        dataset: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Fit states to a sequence and emit transformed frames and correspondences.
    Track {
        /// Directory of frame_NNNN.xyz files.
        sequence: PathBuf,
        /// Trained model (.ckpt).
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Predict the frame after a 3-frame sequence.
    Forecast {
        /// Directory of exactly three frame_NNNN.xyz files.
        sequence: PathBuf,
        /// Trained model (.ckpt).
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Score a track result directory against a ground-truth sequence.
    Evaluate {
        /// Output directory of `track`.
        result: PathBuf,
        /// Sequence directory; without gt_NNNN.corr files, points are index-aligned across frames.
        ground_truth: PathBuf,
    },
    /// Train with and without the temporal recurrence and compare.
    Ablate {
        /// Dataset root with ground truth.
        dataset: PathBuf,
    },
}

fn exit_code(command: &Command, err: &Error) -> i32 {
    match (command, err) {
        (_, Error::Config(_)) => EXIT_CONFIG,
        (_, Error::MissingFrame { .. } | Error::EmptyDataset) => EXIT_MISSING_FRAMES,
        (Command::Forecast { .. }, Error::Protocol(_)) => EXIT_FORECAST_FRAMES,
        (Command::Evaluate { .. }, Error::Protocol(_) | Error::Shape(_)) => EXIT_MISALIGNED,
        (_, Error::ConfigMismatch(_) | Error::Shape(_)) => EXIT_MISMATCH,
        _ => EXIT_FAILURE,
    }
}

/// Runs with the process arguments and returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        log::LevelFilter::Warn
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();

    let Some(out) = cli.out.clone() else {
        eprintln!("error: --out is required");
        return EXIT_CONFIG;
    };
    let ctx = commands::Context {
        seed: cli.seed,
        config: cli.config.clone(),
        out,
        quiet: cli.quiet,
    };
    let result = match &cli.command {
        Command::Generate => commands::generate(&ctx),
        Command::Train { dataset, resume } => commands::train(&ctx, dataset, resume.as_deref()),
        Command::Track { sequence, checkpoint } => commands::track(&ctx, sequence, checkpoint),
        Command::Forecast { sequence, checkpoint } => commands::forecast(&ctx, sequence, checkpoint),
        Command::Evaluate { result, ground_truth } => commands::evaluate(&ctx, result, ground_truth),
        Command::Ablate { dataset } => commands::ablate(&ctx, dataset),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&cli.command, &e)
        }
    }
}
