//! `fauforensics`: corpus generation, training, evaluation, robustness
//! sweeps, gradient checking, FAU correlation analysis and inference.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data or format error,
//! 3 failed check. Failures print one line starting with `error:`.

mod commands;
mod manifest;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use fauforensics::corpus::VideoMode;
use fauforensics::model::HeadMode;
use fauforensics::{par, Error};

#[derive(Debug, Parser)]
#[command(name = "fauforensics", version, about = "FAU-enhanced audio-visual deepfake detection")]
struct Cli {
    /// Worker threads for generation, kernels and evaluation (falls back to
    /// FF_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labelled corpus.
    Generate(GenerateArgs),
    /// Train a detector on a corpus.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a corpus.
    Eval(EvalArgs),
    /// Evaluate a checkpoint under every perturbation kind and level.
    PerturbEval(EvalArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Real versus fake FAU temporal-consistency statistics.
    AnalyzeCorrelation(CorrelationArgs),
    /// Score one clip of a corpus.
    Infer(InferArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    mode: Option<VideoMode>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    frames: Option<usize>,
    /// key=value file with generator settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for checkpoints and logs.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    lambda_av: Option<f64>,
    #[arg(long)]
    lambda_a: Option<f64>,
    #[arg(long)]
    lambda_v: Option<f64>,
    #[arg(long)]
    head_mode: Option<HeadMode>,
    #[arg(long)]
    latent: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// key=value file with model and training settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Report path; perturb-eval also writes `<report>.grid.tsv`.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long = "t", default_value_t = 8)]
    frames: usize,
    #[arg(long = "l", default_value_t = 16)]
    latent: usize,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Optional per-tensor report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CorrelationArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus file holding the clip.
    #[arg(long)]
    clip: PathBuf,
    #[arg(long, default_value_t = 0)]
    index: usize,
}

/// Why a command did not succeed.
enum Failure {
    Error(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Config(_) => 1,
        _ => 2,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The reason part of a rendered clap error, without usage or hints.
fn clap_reason(rendered: &str) -> String {
    let reason: Vec<&str> = rendered
        .lines()
        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
        .collect();
    one_line(reason.join(" ").trim_start_matches("error:"))
}

fn workers(flag: Option<usize>) -> Result<usize, Error> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("FF_WORKERS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Usage(format!("FF_WORKERS must be a thread count, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            // a closed stdout (e.g. piped into `head`) is not a failure
            let _ = write!(std::io::stdout(), "{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error: {}", clap_reason(&e.to_string()));
            return ExitCode::from(1);
        }
    };
    let n = match workers(cli.workers) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            return ExitCode::from(exit_code(&e));
        }
    };
    match par::with_workers(n, || commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error: {}", one_line(&msg));
            ExitCode::from(3)
        }
    }
}
