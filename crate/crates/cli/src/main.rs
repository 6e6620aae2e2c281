//! `copula-stream`: simulate mixed-type streams, impute them online and
//! detect correlation change points.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<copula_stream::Error> for CliError {
    fn from(e: copula_stream::Error) -> Self {
        use copula_stream::Error as E;
        if e.is_numerical() {
            return CliError::Numerical(e.to_string());
        }
        match e.root() {
            E::Precondition(_) | E::Schema(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "copula-stream", version, about = "Online Gaussian copula imputation and change-point detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic stream: data.csv, mask.csv, truth.csv, labels.csv.
    Simulate(SimulateArgs),
    /// Impute missing cells batch by batch.
    Impute(ImputeArgs),
    /// Test each batch for a change in the latent correlation.
    Detect(DetectArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MechanismArg {
    Mcar,
    Mnar,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Windowed marginals, one update per batch, imputes as it goes.
    Online,
    /// Marginals from all rows, one pass of decaying-step updates.
    Minibatch,
    /// Marginals from all rows, full EM to convergence.
    Offline,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub n_per_segment: usize,
    /// Number of change points; segments have equal length.
    #[arg(long, default_value_t = 2)]
    pub changes: usize,
    #[arg(long, default_value_t = 5)]
    pub p_cont: usize,
    #[arg(long, default_value_t = 5)]
    pub p_ord: usize,
    #[arg(long, default_value_t = 5)]
    pub p_bin: usize,
    #[arg(long, default_value_t = 5)]
    pub levels: u32,
    #[arg(long, default_value_t = 0.4)]
    pub missing_ratio: f64,
    #[arg(long, value_enum, default_value_t = MechanismArg::Mcar)]
    pub mechanism: MechanismArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Input CSV; empty cells are missing.
    #[arg(long)]
    pub input: PathBuf,
    /// Column kinds, e.g. `cont,cont,ord5,bin`; overrides a `#kind:` line.
    #[arg(long)]
    pub schema: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Marginal window length.
    #[arg(long, default_value_t = 200)]
    pub window: usize,
    /// Rows per batch [default: 40, 100 in minibatch mode].
    #[arg(long)]
    pub batch: Option<usize>,
    /// Constant step size in (0, 1).
    #[arg(long, conflicts_with = "gamma_c")]
    pub gamma: Option<f64>,
    /// Decaying step size c / (t + c).
    #[arg(long)]
    pub gamma_c: Option<f64>,
    /// Worker threads for row-parallel work.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Start from a saved model instead of an empty one.
    #[arg(long)]
    pub snapshot_in: Option<PathBuf>,
    /// Save the final model.
    #[arg(long)]
    pub snapshot_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ImputeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = Mode::Online)]
    pub mode: Mode,
    /// Ground truth CSV; when given, missing input cells are scored.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Monte Carlo replicates B.
    #[arg(long, default_value_t = 99)]
    pub mc_samples: usize,
    /// Target false discovery rate.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Batches left untested after a detection.
    #[arg(long, default_value_t = 3)]
    pub burn_in: usize,
    /// Batches left untested at the start, after the warm-up batch.
    #[arg(long, default_value_t = 3)]
    pub initial_burn_in: usize,
    /// Use the p-value without the +1 correction (can be zero).
    #[arg(long)]
    pub biased_p: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Impute(a) => commands::impute(a),
        Command::Detect(a) => commands::detect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
