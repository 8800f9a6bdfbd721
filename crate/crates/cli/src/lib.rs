//! `fusformer` command line: simulate inputs, train, infer, evaluate, run
//! the self-checks and the residual-learning ablation.

mod commands;
mod manifest;
mod source;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use manifest::RunManifest;
pub use source::GtSource;

#[derive(Debug, Parser)]
#[command(name = "fusformer", version, about = "Hyperspectral/multispectral fusion transformer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Degrade a ground-truth cube into LR-HSI / HR-MSI / upsampled inputs.
    Simulate(SimulateArgs),
    /// Train a model on one or more simulated sample directories.
    Train(TrainArgs),
    /// Tiled inference from a checkpoint.
    Infer(InferArgs),
    /// Quality indices of a prediction against ground truth.
    Eval(EvalArgs),
    /// Print the parameter count of a model config.
    Params(ParamsArgs),
    /// Run the built-in invariant suites.
    Check(CheckArgs),
    /// Train with and without residual learning and compare on a held-out cube.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Cube file, or `synth:seed,H,W,S`.
    #[arg(long, value_parser = source::parse_gt)]
    pub gt: GtSource,
    #[arg(long, default_value_t = 4)]
    pub ratio: usize,
    /// Blur sigma in HR pixels [default: ratio/2].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// SRF CSV file, or `default3`.
    #[arg(long, default_value = "default3")]
    pub srf: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Comma-separated sample directories written by `simulate`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub data: Vec<PathBuf>,
    /// Training config JSON; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from this checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub lr: PathBuf,
    #[arg(long)]
    pub msi: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub tile: usize,
    #[arg(long, default_value_t = 8)]
    pub overlap: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 4.0)]
    pub ratio: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for residual cubes and PGM previews.
    #[arg(long)]
    pub residual: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub grad: bool,
    #[arg(long)]
    pub perm: bool,
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Ablation config JSON (training keys plus `train_gt`, `holdout_gt`,
    /// `srf`, `tile`, `overlap`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// A problem with how the command was invoked rather than with its inputs.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Parse `argv` (program name first) and run the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}
