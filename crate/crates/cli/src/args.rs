use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "maskbc", version, about = "Rate-leakage tools for the MIMO Gaussian broadcast channel with state masking")]
pub struct Cli {
    /// Unit for every rate and leakage field, on input and output.
    #[arg(long, value_enum, global = true, default_value_t = Unit::Nats)]
    pub unit: Unit,

    /// Write the result here instead of stdout.
    #[arg(short = 'o', long, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Nats,
    Bits,
}

impl Unit {
    /// Converts a value held internally in nats.
    pub fn from_nats(self, v: f64) -> f64 {
        match self {
            Unit::Nats => v,
            Unit::Bits => v / std::f64::consts::LN_2,
        }
    }

    pub fn to_nats(self, v: f64) -> f64 {
        match self {
            Unit::Nats => v,
            Unit::Bits => v * std::f64::consts::LN_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Pair {
    /// Channel JSON: {"t", "K", "K_S1", "K_S2", "K_Z1", "K_Z2"}.
    pub spec: PathBuf,
    /// Strategy JSON: {"t", "K_X1", "Sigma_XS1", "Sigma_XS2"}.
    pub strategy: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form (R1, R2, E1, E2) of a strategy, with its feasibility report.
    Eval {
        #[command(flatten)]
        files: Pair,
    },

    /// Coding-scheme residuals, inner/outer agreement and, optionally, the
    /// enhanced-channel checks.
    Verify {
        #[command(flatten)]
        files: Pair,

        /// Extra random strategies for the same channel.
        #[arg(long, default_value_t = 0)]
        trials: usize,

        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Perturb one auxiliary gain by 0.1 before checking (a10, a11, a12, a21, a22).
        #[arg(long)]
        inject_fault: Option<String>,

        /// Also solve and enhance the Gaussian subproblem (degraded channels).
        #[arg(long)]
        extremal: bool,

        /// Weights used by --extremal.
        #[arg(long, value_delimiter = ',', default_values_t = [1.5, 3.0])]
        mu: Vec<f64>,

        /// Threshold for the residual checks.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,

        /// Relative threshold for inner/outer agreement.
        #[arg(long, default_value_t = 1e-8)]
        rel_tol: f64,
    },

    /// Optimal R1 + μ R2 along a list of weights, under leakage budgets.
    Frontier {
        spec: PathBuf,

        /// Comma-separated weights, each >= 1.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        mu_list: Vec<f64>,

        /// Leakage budget for receiver 1 (omit for none).
        #[arg(long)]
        e1: Option<f64>,

        #[arg(long)]
        e2: Option<f64>,

        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Number of optimizer starts.
        #[arg(long, default_value_t = 8)]
        restarts: usize,

        /// Output format.
        #[arg(long = "out", value_enum, default_value_t = Format::Json)]
        format: Format,
    },

    /// Monte-Carlo cross-check of every closed-form information term.
    Mc {
        #[command(flatten)]
        files: Pair,

        /// Number of samples.
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,

        #[arg(long, default_value_t = 0)]
        seed: u64,
    },

    /// Gaussian subproblem, enhanced channel and scalar candidate laws.
    ExtremalTest {
        spec: PathBuf,

        #[arg(long)]
        mu: f64,

        /// JSON array of candidate laws (scalar channels only).
        #[arg(long)]
        candidates: Option<PathBuf>,

        /// Number of random candidate laws (scalar channels only).
        #[arg(long, default_value_t = 0)]
        random: usize,

        #[arg(long, default_value_t = 0)]
        seed: u64,
    },

    /// Runs the acceptance suite.
    SelfTest {
        /// Criterion ids to run (default all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}
