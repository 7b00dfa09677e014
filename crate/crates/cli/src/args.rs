use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use exquant::simlab::{Estimator, Scenario};

#[derive(Debug, Parser)]
#[command(name = "exquant", version, about = "Extremal quantile regression with penalized B-splines")]
pub struct Cli {
    /// More log output (repeat for debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one quantile curve and write the model and a curve grid
    Fit(FitArgs),
    /// Fit a quantile ladder, estimate the tail index and extrapolate
    Tail(TailArgs),
    /// Run a replicated Monte Carlo study
    Simulate(SimulateArgs),
    /// Report ξ = (1 - τ) n and the intermediate/extreme verdict
    Classify(ClassifyArgs),
}

/// `gacv` or a fixed non-negative number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaArg {
    Gacv,
    Fixed(f64),
}

impl FromStr for LambdaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("gacv") {
            return Ok(LambdaArg::Gacv);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaArg::Fixed(v)),
            _ => Err(format!("expected `gacv` or a non-negative number, got `{s}`")),
        }
    }
}

impl fmt::Display for LambdaArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaArg::Gacv => f.write_str("gacv"),
            LambdaArg::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// `auto` for `⌊7.5 n^{1/3}⌋`, or an explicit ladder length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KArg {
    Auto,
    Fixed(usize),
}

impl FromStr for KArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(KArg::Auto);
        }
        s.parse::<usize>()
            .map(KArg::Fixed)
            .map_err(|_| format!("expected `auto` or an integer, got `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NonpositiveArg {
    Abort,
    Mask,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "x")]
    pub x_col: String,
    #[arg(long, default_value = "y")]
    pub y_col: String,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Knot spans K on the observed x-range
    #[arg(long, default_value_t = 40)]
    pub knots: usize,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    /// Derivative order m of the penalty
    #[arg(long, default_value_t = 2)]
    pub penalty_order: usize,
    /// Smoothing parameter: `gacv` or a number
    #[arg(long, default_value = "gacv")]
    pub lambda: LambdaArg,
    /// Candidates on the GACV grid
    #[arg(long, default_value_t = 30)]
    pub lambda_candidates: usize,
    /// Points on the output curve grid
    #[arg(long, default_value_t = 401)]
    pub grid_points: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub tau: f64,
}

#[derive(Debug, Args)]
pub struct TailArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Extreme target levels τ_E (comma separated)
    #[arg(long, value_delimiter = ',', required = true)]
    pub tau_e: Vec<f64>,
    /// Intermediate base level τ_I; default is the highest ladder level
    /// below each target
    #[arg(long)]
    pub tau: Option<f64>,
    /// Ladder exponent η in (0, 1)
    #[arg(long, conflicts_with = "xi")]
    pub eta: Option<f64>,
    /// Target (1 - τ_1) n of the top ladder level, used when --eta is absent
    #[arg(long, default_value_t = 3.0)]
    pub xi: f64,
    /// Ladder length: `auto` or an integer
    #[arg(long, default_value = "auto")]
    pub k: KArg,
    /// Regime threshold on ξ
    #[arg(long, default_value_t = 30.0)]
    pub threshold: f64,
    /// Handling of nonpositive ladder quantiles
    #[arg(long, value_enum, default_value_t = NonpositiveArg::Abort)]
    pub nonpositive: NonpositiveArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_delimiter = ',', default_value = "A")]
    pub scenario: Vec<Scenario>,
    #[arg(long, value_delimiter = ',', default_value = "200,1000")]
    pub n_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.995")]
    pub tau_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "PSE-I,PSE-E,PSE-Ep")]
    pub estimators: Vec<Estimator>,
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    /// Root seed; replication r uses seed XOR splitmix64(r)
    #[arg(long, default_value_t = 20_190_101)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub knots: usize,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
    #[arg(long, default_value_t = 2)]
    pub penalty_order: usize,
    #[arg(long, default_value = "gacv")]
    pub lambda: LambdaArg,
    #[arg(long, default_value_t = 30)]
    pub lambda_candidates: usize,
    #[arg(long, default_value_t = 3.0)]
    pub xi: f64,
    #[arg(long, default_value = "auto")]
    pub k: KArg,
    /// Run replications on one thread
    #[arg(long)]
    pub sequential: bool,
    /// Directory for report.csv and evi.csv; the report goes to stdout
    /// when absent
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Levels to classify (comma separated)
    #[arg(long, value_delimiter = ',', required = true)]
    pub tau: Vec<f64>,
    /// Sample size
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = exquant::evt::DEFAULT_XI_THRESHOLD)]
    pub threshold: f64,
}
