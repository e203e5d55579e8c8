//! Command-line surface: load images and masks, run a single operator or
//! the automatic pipeline, emit edited images, saliency maps, traces and
//! metrics. Exit codes: 0 success, 1 usage error, 2 runtime abort.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "salgrad", version, about = "Saliency-guided image editing by gradient descent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one editing operator over a masked region
    Edit(EditArgs),
    /// Segment distractors and pick the best operator per region
    Auto(AutoArgs),
    /// Predict and visualize the saliency of an image
    Inspect(InspectArgs),
    /// Report the saliency reduction achieved by an edit
    Eval(EvalArgs),
}

#[derive(Args, Debug, Default)]
struct EditArgs {
    /// 8-bit RGB raster (PNG; JPEG accepted read-only)
    #[arg(long)]
    image: Option<PathBuf>,
    /// Grayscale mask, binarized at 128
    #[arg(long)]
    mask: Option<PathBuf>,
    /// recolor | warp | convnet | noise | baseline
    #[arg(long)]
    operator: Option<String>,
    /// zero | one | PATH (grayscale target map)
    #[arg(long)]
    target: Option<String>,
    /// Similarity weight
    #[arg(long)]
    beta: Option<f64>,
    /// Regularizer weight
    #[arg(long)]
    gamma: Option<f64>,
    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Iteration budget
    #[arg(long)]
    iters: Option<usize>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Feather the binarized mask with a 2 px Gaussian
    #[arg(long, default_value_t = false)]
    soft_mask: bool,
    /// key=value config file; explicit flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct AutoArgs {
    #[arg(long)]
    image: Option<PathBuf>,
    /// Directory of numbered PNG frames sharing the image's dimensions
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Segmentation threshold on predicted saliency
    #[arg(long)]
    threshold: Option<f64>,
    /// Grayscale mask of protected (subject) pixels
    #[arg(long)]
    protect: Option<PathBuf>,
    /// Comma-separated operator candidates
    #[arg(long)]
    candidates: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct InspectArgs {
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct EvalArgs {
    #[arg(long)]
    original: Option<PathBuf>,
    #[arg(long)]
    edited: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Failure classification driving the exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable/corrupt files, dimension mismatches.
    Usage(String),
    /// The optimization aborted at runtime; outputs hold the best-so-far.
    Runtime(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

pub type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap would exit 2 on usage problems; this tool reserves 2 for
            // runtime aborts
            let is_usage = e.use_stderr();
            let _ = e.print();
            return if is_usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Edit(args) => commands::edit(args),
        Command::Auto(args) => commands::auto(args),
        Command::Inspect(args) => commands::inspect(args),
        Command::Eval(args) => commands::eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("aborted: {msg}");
            ExitCode::from(2)
        }
    }
}
