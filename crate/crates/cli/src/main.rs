//! `bgcn`: data preparation, graph learning, training, evaluation and plotting for the
//! Bayesian graph traffic forecaster.

mod commands;
mod plot;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bgcn_core::Error;

#[derive(Parser, Debug)]
#[command(name = "bgcn", version, about = "Bayesian graph convolution traffic forecasting")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every artifact a command writes.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Directory holding traffic.csv (or traffic.bin), distances.csv and node_ids.txt.
    #[arg(long, global = true, default_value = "data")]
    data: PathBuf,
}

#[derive(Subcommand, Debug)]
pub(crate) enum Command {
    /// Clean, normalize and window the data; write the manifest.
    Prepare,
    /// Generate a synthetic road network into the data directory.
    Synth(commands::SynthArgs),
    /// Train the graph auto-encoder and write node embeddings.
    Embed,
    /// Solve for the constant adjacency from the embeddings.
    InferGraph,
    /// Train the forecaster.
    Train,
    /// Score a checkpoint and the seasonal baseline on a split.
    Eval(commands::EvalArgs),
    /// Train the full model and its ablations on shared splits.
    Ablate(commands::AblateArgs),
    /// Train one model per dropout rate.
    SweepDropout(commands::SweepArgs),
    /// Write forecasts (optionally Monte Carlo mean and spread) for a split.
    Predict(commands::EvalArgs),
    /// Render heatmaps, histograms and curves from existing artifacts.
    Plot,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    /// 1 usage, 2 data, 3 divergence.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                Error::Divergence { .. } => 3,
                Error::Config(_) | Error::InvalidArgument(_) => 1,
                _ => 2,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
