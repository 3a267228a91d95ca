//! `maskeval` command-line front end.
//!
//! Exit codes: 0 success, 1 validation mismatch, 2 unreadable or invalid
//! input, 3 bad configuration.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maskeval::diagnose::{DEFAULT_COVERAGE_FRAC, DEFAULT_FLAG_THRESHOLD, DEFAULT_OFFSET_FRAC, DEFAULT_OVERSIZE_RATIO};
use maskeval::ingest::Split;
use maskeval::mask::DEFAULT_MASK_THRESHOLD;
use maskeval::matching::DEFAULT_MAX_DETECTIONS;

pub const THREADS_ENV: &str = "MASKEVAL_THREADS";

#[derive(Parser)]
#[command(name = "maskeval", version, about = "Box and mask evaluation for two-head detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a tagging-tool export into the ground-truth schema.
    Convert(ConvertArgs),
    /// Count instances per class and split; optionally diff against an expected summary.
    Validate(ValidateArgs),
    /// Compute summary metrics, per-class tables, confusion matrix and PR curves.
    Evaluate(EvaluateArgs),
    /// Compare box and mask F1 per class.
    Compare(CompareArgs),
    /// Classify box-versus-mask divergence for every box true positive.
    Diagnose(DiagnoseArgs),
    /// Generate a synthetic ground-truth/prediction pair.
    Simulate(SimulateArgs),
}

#[derive(Args, Clone)]
pub struct EvalArgs {
    /// Ground-truth JSON file.
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction JSON file.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Score cut for the per-class precision/recall/F1 tables.
    #[arg(long, default_value_t = 0.5)]
    pub score: f64,
    #[arg(long = "max-det", default_value_t = DEFAULT_MAX_DETECTIONS)]
    pub max_det: usize,
    /// Binarization threshold for mask grids.
    #[arg(long = "mask-threshold", default_value_t = DEFAULT_MASK_THRESHOLD)]
    pub mask_threshold: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Box,
    Mask,
    Both,
}

impl KindArg {
    fn name(self) -> &'static str {
        match self {
            KindArg::Box => "box",
            KindArg::Mask => "mask",
            KindArg::Both => "both",
        }
    }
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long, value_enum, default_value_t = KindArg::Both)]
    pub kind: KindArg,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Gaps above this are flagged.
    #[arg(long = "flag-threshold", default_value_t = DEFAULT_FLAG_THRESHOLD)]
    pub flag_threshold: f64,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long = "oversize-ratio", default_value_t = DEFAULT_OVERSIZE_RATIO)]
    pub oversize_ratio: f64,
    #[arg(long = "offset-frac", default_value_t = DEFAULT_OFFSET_FRAC)]
    pub offset_frac: f64,
    #[arg(long = "coverage-frac", default_value_t = DEFAULT_COVERAGE_FRAC)]
    pub coverage_frac: f64,
    #[arg(long = "flag-threshold", default_value_t = DEFAULT_FLAG_THRESHOLD)]
    pub flag_threshold: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Planted,
    Perfect,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario JSON file; a built-in preset is used when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Planted, conflicts_with = "spec")]
    pub preset: Preset,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ConvertArgs {
    /// Tagging-tool export (single asset or whole project).
    #[arg(long)]
    pub input: PathBuf,
    /// Target frame width.
    #[arg(long, default_value_t = 960)]
    pub width: u32,
    /// Target frame height.
    #[arg(long, default_value_t = 540)]
    pub height: u32,
    /// Comma-separated class names; defaults to the twelve road classes.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Split ground truth as SPLIT=PATH, with SPLIT one of training, validation, testing.
    #[arg(long = "gt", value_parser = parse_split_path, required = true)]
    pub gt: Vec<(Split, PathBuf)>,
    /// Expected per-class counts; any difference exits with code 1.
    #[arg(long = "expected-summary")]
    pub expected_summary: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_split_path(s: &str) -> Result<(Split, PathBuf), String> {
    let (split, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected SPLIT=PATH, got {s:?}"))?;
    if path.is_empty() {
        return Err("empty path".into());
    }
    Ok((split.parse()?, PathBuf::from(path)))
}

/// Why a run failed, and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Mismatch(String),
    Input(String),
    Config(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Mismatch(_) => 1,
            Failure::Input(_) => 2,
            Failure::Config(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Mismatch(m) | Failure::Input(m) | Failure::Config(m) => m,
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Config(format!("{THREADS_ENV} must be a non-negative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Convert(a) => commands::convert(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::Simulate(a) => commands::simulate(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
