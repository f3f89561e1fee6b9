//! `adjfree`: search for lag-robust adversarial perturbations against a
//! black-box audio classifier and analyze the results.

mod attack;
mod classifier;
mod commands;

use std::path::PathBuf;

use adjfree::{DistanceKind, ObjectiveSet};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classifier::ClassifierSpec;

#[derive(Parser)]
#[command(name = "adjfree", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-objective attack and write its artifacts.
    Attack(AttackArgs),
    /// Measure correct-class confidence of a perturbation over a dense lag grid.
    SweepLag(SweepArgs),
    /// Pick one representative entry from a front.
    Select(SelectArgs),
    /// Pair entries of a 3-objective and a 2-objective run by f1.
    Compare(CompareArgs),
    /// Fraction of targets with at least one adjust-free entry.
    Tally(TallyArgs),
    /// Write the built-in synthetic corpus as WAV files.
    MakeCorpus(CorpusArgs),
}

#[derive(Args, Clone)]
pub struct ModelArgs {
    /// `builtin` or `cmd:<shell command>`.
    #[arg(long, default_value = "builtin")]
    pub classifier: ClassifierSpec,
    /// Labels of the built-in surrogate, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = classifier::default_labels())]
    pub labels: Vec<String>,
    /// Seed of the built-in surrogate's template corpus.
    #[arg(long, default_value_t = 0)]
    pub corpus_seed: u64,
    /// Softmax temperature of the built-in surrogate.
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Per-request timeout for external classifiers, in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub timeout: f64,
    /// Number of external classifier processes.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum LagModeArg {
    Grid,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum VerifyArg {
    All,
    Exported,
    None,
}

#[derive(Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 91)]
    pub pop: usize,
    /// Neighborhood size; capped at the population size.
    #[arg(long, default_value_t = 20)]
    pub neighborhood: usize,
    #[arg(long, default_value_t = 2000)]
    pub gens: usize,
    /// Largest playback lag in seconds.
    #[arg(long, default_value_t = 0.5)]
    pub tmax: f64,
    /// Lags evaluated per candidate (odd, at least 3).
    #[arg(long, default_value_t = 9)]
    pub lags: usize,
    #[arg(long, value_enum, default_value_t = LagModeArg::Grid)]
    pub lag_mode: LagModeArg,
    /// Maximum absolute perturbation sample.
    #[arg(long, default_value_t = 0.1)]
    pub bound: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "f1f2f3")]
    pub objectives: ObjectiveSet,
    #[arg(long, value_enum, default_value_t = DistanceArg::L2)]
    pub distance: DistanceArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Dense lag grid used to verify adjust-freeness of front entries.
    #[arg(long, default_value_t = 41)]
    pub dense_lags: usize,
    #[arg(long, default_value_t = adjfree::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = VerifyArg::All)]
    pub verify: VerifyArg,
    /// Number of knee-adjacent entries exported as WAV.
    #[arg(long, default_value_t = 5)]
    pub export: usize,
    #[arg(long, default_value_t = 200)]
    pub archive_capacity: usize,
    /// Stop before exceeding this many classifier queries.
    #[arg(long)]
    pub max_queries: Option<u64>,
    /// Write `checkpoint.json` every this many generations (0 disables).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum DistanceArg {
    L2,
    Rmse,
}

impl From<DistanceArg> for DistanceKind {
    fn from(d: DistanceArg) -> Self {
        match d {
            DistanceArg::L2 => DistanceKind::L2,
            DistanceArg::Rmse => DistanceKind::Rmse,
        }
    }
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub perturbation: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 41)]
    pub dense_lags: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tmax: f64,
    #[arg(long, default_value_t = adjfree::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Directory receiving `curve.csv`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SelectArgs {
    /// Path to a `front.json`.
    #[arg(long)]
    pub front: PathBuf,
    /// min-f1, min-f1f2 or knee.
    #[arg(long, default_value = "knee")]
    pub strategy: adjfree::report::SelectStrategy,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Run directory of the 3-objective run.
    #[arg(long)]
    pub with_spread: PathBuf,
    /// Run directory of the 2-objective run.
    #[arg(long)]
    pub without_spread: PathBuf,
    #[arg(long, default_value_t = adjfree::report::ABLATION_BIN_WIDTH)]
    pub bin_width: f64,
    /// Directory receiving `comparison.csv`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TallyArgs {
    /// Run directories.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, default_value_t = adjfree::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Directory receiving `tally.json`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = classifier::default_labels())]
    pub labels: Vec<String>,
    /// Clip length in seconds.
    #[arg(long, default_value_t = 0.5)]
    pub duration: f64,
    #[arg(long, default_value_t = 8000)]
    pub rate: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Attack(a) => attack::run(a),
        Command::SweepLag(a) => commands::sweep_lag(a),
        Command::Select(a) => commands::select(a),
        Command::Compare(a) => commands::compare(a),
        Command::Tally(a) => commands::tally(a),
        Command::MakeCorpus(a) => commands::make_corpus(a),
    };
    if let Err(e) = result {
        eprintln!("error: {}", render(&e));
        std::process::exit(1);
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn render(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
    }
    msg
}
