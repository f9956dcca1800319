//! `nlpca` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or invalid argument, 2 I/O or malformed
//! input file, 3 numerical failure.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlpca_core::NlpcaError;

#[derive(Debug, Parser)]
#[command(name = "nlpca", version, about = "Poisson non-local PCA denoising for photon-limited images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw Poisson counts from an intensity image scaled to a peak.
    Simulate(SimulateArgs),
    /// Denoise a count image.
    Denoise(DenoiseArgs),
    /// PSNR and MAE of a peak-domain estimate against a ground truth.
    Evaluate(EvaluateArgs),
    /// Standard deviation of Anscombe-transformed Poisson samples.
    AnscombeCheck(AnscombeArgs),
    /// Methods x peaks x realizations benchmark on a phantom.
    Bench(BenchArgs),
    /// Write a bundled phantom image.
    Phantom(PhantomArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub peak: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// nlpca, nlspca or anscombe.
    #[arg(long, default_value = "nlpca")]
    pub method: String,
    /// Patch side (square 2D patches) or explicit shape such as 5x5x23.
    #[arg(long)]
    pub patch: Option<String>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Fixed l1 weight; by default 70 sqrt(ln(M_k) / N) per cluster.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Bin side: aggregate counts in bins, denoise, enlarge bilinearly.
    #[arg(long)]
    pub bin: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub stop_tol: Option<f64>,
    #[arg(long)]
    pub cond: Option<f64>,
    /// Halve Newton steps that increase the block loss.
    #[arg(long)]
    pub guard: bool,
    /// algebraic or asymptotic (Anscombe method only).
    #[arg(long)]
    pub inverse: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    /// JSON run report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Ground truth for PSNR/MAE in the report (needs --peak).
    #[arg(long, requires = "peak")]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub peak: Option<f64>,
    /// Maximum number of clusters factorized concurrently.
    #[arg(long, env = "NLPCA_THREADS")]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub peak: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct AnscombeArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,3,10")]
    pub f_list: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "ridges")]
    pub phantom: String,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1")]
    pub peaks: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "nlpca,nlspca,anscombe,nlpca_bin,nlspca_bin")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub bin: usize,
    /// Side of the square patches (default 20).
    #[arg(long)]
    pub patch: Option<usize>,
    /// Number of clusters (default 14).
    #[arg(long)]
    pub clusters: Option<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Directory for first-realization estimates (RAW3D, f64).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Maximum number of clusters factorized concurrently.
    #[arg(long, env = "NLPCA_THREADS")]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value = "ridges")]
    pub name: String,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<NlpcaError> for CliError {
    fn from(e: NlpcaError) -> Self {
        let code = match e {
            NlpcaError::InvalidArgument(_) | NlpcaError::ShapeMismatch(_) => 1,
            NlpcaError::Io { .. } | NlpcaError::Parse { .. } => 2,
            NlpcaError::DegenerateIntensity | NlpcaError::Numeric { .. } => 3,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `argv` (without the program name) and runs the command.
pub fn run(argv: &[OsString]) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(std::iter::once(OsString::from("nlpca")).chain(argv.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::usage(e.to_string().trim_end())),
    };
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, argv),
        Command::Denoise(a) => commands::denoise(a, argv),
        Command::Evaluate(a) => commands::evaluate(a, argv),
        Command::AnscombeCheck(a) => commands::anscombe_check(a, argv),
        Command::Bench(a) => commands::bench(a, argv),
        Command::Phantom(a) => commands::write_phantom(a),
        Command::Replay(a) => commands::replay(a),
    }
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().skip(1).collect();
    match run(&argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
