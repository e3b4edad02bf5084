//! Command-line surface. Subcommand arguments are serializable so a
//! manifest can record and replay them.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gjn_core::Decimal;
use serde::{Deserialize, Serialize};

fn decimal(text: &str) -> Result<Decimal, String> {
    Decimal::parse(text).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Parser)]
#[command(name = "gjn", version, about = "Generalized Jackson network experiments")]
pub struct Cli {
    /// Network spec file, or `corpus:<name>` for a built-in network.
    #[arg(long, global = true)]
    pub spec: Option<String>,
    /// Root of the output tree.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Traffic rates, w-matrix, r0, u vectors and drift margins.
    Analyze(AnalyzeArgs),
    /// Moments of the scaled queues and Palm event rates.
    Simulate(SimulateArgs),
    /// BAR residuals of truncated test functions.
    VerifyBar(VerifyBarArgs),
    /// Estimates of S1 to S4 at one scale.
    Statements(StatementsArgs),
    /// Statements over a grid of scales.
    Sweep(SweepArgs),
    /// Marginal queue laws against the product-form limit.
    ProductForm(ProductFormArgs),
    /// Monte Carlo hitting probabilities against the w-matrix.
    RoutingOracle(RoutingArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Analyze(_) => "analyze",
            Self::Simulate(_) => "simulate",
            Self::VerifyBar(_) => "verify-bar",
            Self::Statements(_) => "statements",
            Self::Sweep(_) => "sweep",
            Self::ProductForm(_) => "product-form",
            Self::RoutingOracle(_) => "routing-oracle",
        }
    }
}

/// Simulation controls shared by the stochastic subcommands.
#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct RunArgs {
    /// Model-time horizon per replication.
    #[arg(long, value_parser = decimal)]
    pub horizon: Option<Decimal>,
    /// Fraction of the horizon discarded as warmup.
    #[arg(long, value_parser = decimal, default_value = "0.2")]
    pub warmup: Decimal,
    #[arg(long, default_value_t = 32)]
    pub batches: usize,
    #[arg(long, default_value_t = 1)]
    pub reps: u64,
    #[arg(long, value_parser = decimal, default_value = "0.95")]
    pub confidence: Decimal,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct AnalyzeArgs {
    /// Scale for the rate-dependent fields; repeatable.
    #[arg(long = "r", value_parser = decimal, default_value = "0.1")]
    pub r: Vec<Decimal>,
    /// Exact rational arithmetic.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct SimulateArgs {
    #[arg(long = "r", value_parser = decimal)]
    pub r: Decimal,
    #[command(flatten)]
    pub run: RunArgs,
    /// Keep every n-th Palm record; 0 keeps none.
    #[arg(long, default_value_t = 0)]
    pub thin: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct VerifyBarArgs {
    #[arg(long = "r", value_parser = decimal)]
    pub r: Decimal,
    /// Test-function selector; repeatable. Defaults to the whole truncated
    /// family.
    #[arg(long = "function")]
    pub functions: Vec<String>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct StatementsArgs {
    #[arg(long = "r", value_parser = decimal)]
    pub r: Decimal,
    #[arg(long)]
    pub k: usize,
    /// Queue exponent; ignored with `--eps`.
    #[arg(long, value_parser = decimal)]
    pub n: Option<Decimal>,
    /// Moment order; defaults to the network's M.
    #[arg(long = "M", value_parser = decimal)]
    pub m: Option<Decimal>,
    /// Non-integer variant: beta = M + eps/(M + eps), n = beta - 1.
    #[arg(long, value_parser = decimal)]
    pub eps: Option<Decimal>,
    /// Base horizon of the default schedule `H0 * 0.3 / r`.
    #[arg(long = "H0", value_parser = decimal, default_value = "1000000")]
    pub h0: Decimal,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct SweepArgs {
    /// Grid of scales, comma separated.
    #[arg(long = "r", value_parser = decimal, value_delimiter = ',', default_value = "0.3,0.2,0.1,0.05")]
    pub r: Vec<Decimal>,
    /// Stations; defaults to every covered station.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// Queue exponents; defaults to M.
    #[arg(long, value_parser = decimal, value_delimiter = ',')]
    pub n: Vec<Decimal>,
    #[arg(long = "H0", value_parser = decimal, default_value = "1000000")]
    pub h0: Decimal,
    /// Per-point horizons overriding the schedule, one per grid point.
    #[arg(long = "point-horizon", value_parser = decimal, value_delimiter = ',')]
    pub point_horizon: Vec<Decimal>,
    #[arg(long, value_parser = decimal, default_value = "5")]
    pub max_ratio: Decimal,
    #[arg(long, value_parser = decimal, default_value = "0.01")]
    pub trend_level: Decimal,
    #[command(flatten)]
    pub run: RunArgs,
    /// Re-execute the sweep recorded in a manifest.
    #[arg(long)]
    #[serde(skip)]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct ProductFormArgs {
    #[arg(long = "r", value_parser = decimal)]
    pub r: Decimal,
    /// Cells of the marginal fit.
    #[arg(long, default_value_t = 10)]
    pub cells: usize,
    #[arg(long = "H0", value_parser = decimal, default_value = "1000000")]
    pub h0: Decimal,
    #[arg(long, value_parser = decimal, default_value = "0.001")]
    pub level: Decimal,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct RoutingArgs {
    #[arg(long, default_value_t = 100_000)]
    pub paths: u64,
    /// Largest admissible |z|.
    #[arg(long, value_parser = decimal, default_value = "4")]
    pub limit: Decimal,
}
