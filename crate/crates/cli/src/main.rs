//! `hetpart` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input, 3 no feasible
//! plan, 4 a solver limit stopped the search with a plan in hand.

mod commands;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// A time or node limit cut a solve short; the written plan carries its
    /// gap.
    LimitHit,
}

#[derive(Debug, Parser)]
#[command(name = "hetpart", version, about = "Latency/cost partitioning of divisible workloads over pay-per-quantum platforms")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Directory for output files; created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Encoding of the primary output where both make sense.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Wall-clock limit per solve in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub time_limit: f64,
    /// Relative optimality gap at which a solve stops.
    #[arg(long, default_value_t = 1e-4)]
    pub gap: f64,
    /// Branch-and-bound node limit per solve.
    #[arg(long, default_value_t = 100_000)]
    pub node_limit: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveMethod {
    Milp,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveMethod {
    Milp,
    Heuristic,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Fleet,
    Adversarial,
    Symmetric,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a latency model to `work,latency_s` samples.
    Fit {
        samples: PathBuf,
        /// Samples to report prediction error on.
        #[arg(long)]
        holdout: Option<PathBuf>,
    },
    /// Price per quantum from ownership cost.
    Rate { inputs: PathBuf },
    /// Partition a cluster's workload.
    Solve {
        cluster: PathBuf,
        #[arg(long, value_enum, default_value = "milp")]
        method: SolveMethod,
        /// Heuristic cost weight in [0, 1].
        #[arg(long)]
        weight: Option<f64>,
        /// Budget for the MILP; omitted means uncapped.
        #[arg(long)]
        cost_cap: Option<f64>,
        /// Also write the program in LP format to this file.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Latency/cost trade-off curve.
    Pareto {
        cluster: PathBuf,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, value_enum, default_value = "both")]
        method: CurveMethod,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Replay a plan with perturbed coefficients.
    Simulate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        cluster: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        noise_beta: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_gamma: f64,
        /// Number of seeds, counted up from `--seed`.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Heuristic against MILP at the cheapest, median and fastest levels.
    Compare {
        cluster: PathBuf,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Generate a synthetic cluster.
    Gen {
        #[arg(long, value_enum, default_value = "fleet")]
        profile: ProfileArg,
        #[arg(long, default_value_t = 16)]
        platforms: usize,
        #[arg(long, default_value_t = 128)]
        tasks: usize,
        /// Standard error each pricing task must reach.
        #[arg(long, default_value_t = 0.001)]
        accuracy: f64,
    },
    /// Generate benchmark samples for `fit`.
    BenchGen {
        /// Slope of the synthetic latency line.
        #[arg(long, default_value_t = 2e-6)]
        beta: f64,
        /// Intercept of the synthetic latency line.
        #[arg(long, default_value_t = 1.5)]
        gamma: f64,
        /// Predicted total benchmarking time in seconds.
        #[arg(long, default_value_t = 600.0)]
        budget_s: f64,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 2)]
        repeats: usize,
        /// Ratio of the largest to the smallest work size.
        #[arg(long, default_value_t = 10.0)]
        span: f64,
        /// Relative standard deviation of the multiplicative noise.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Also write this many holdout samples at 4 to 10 times the
        /// largest benchmark size.
        #[arg(long, default_value_t = 0)]
        holdout: usize,
        /// Time the Monte Carlo pricer on this machine instead of sampling
        /// the line. Timings are not reproducible.
        #[arg(long)]
        measure: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match commands::run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::LimitHit) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
