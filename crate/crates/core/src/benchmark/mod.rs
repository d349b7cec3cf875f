//! Latency-model fitting from timing samples, and a Monte Carlo option
//! pricer used as a realistic divisible workload.

mod fit;
mod montecarlo;

use std::time::Instant;

use thiserror::Error;

pub use fit::{budgeted_work_sizes, fit_latency_model, prediction_error, synthetic_samples, BenchmarkSample, FitResult, PredictionReport};
pub use montecarlo::{
    black_scholes_call, mc_price, mc_price_with, paths_for_accuracy, required_paths, McEstimate, McOption, PATH_BLOCK,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("all samples share one work value; slope and intercept are not identifiable")]
    DegenerateDesign,
    #[error("fitted slope {0} is not positive")]
    NonpositiveSlope(f64),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("holdout set is empty")]
    EmptyHoldout,
    #[error("path count {0} is too small")]
    InvalidPaths(u64),
    #[error("target accuracy must be positive, got {0}")]
    InvalidTarget(f64),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("invalid benchmark plan: {0}")]
    InvalidPlan(String),
}

/// Times [`mc_price`] at each work size on this machine. Wall-clock
/// results are not reproducible.
pub fn measure_samples(option: &McOption, works: &[u64], seed: u64) -> Result<Vec<BenchmarkSample>, BenchError> {
    works
        .iter()
        .map(|&n| {
            let start = Instant::now();
            mc_price_with(option, n.max(2), seed, crate::exec::Execution::Sequential)?;
            BenchmarkSample::new(n, start.elapsed().as_secs_f64().max(1e-9))
        })
        .collect()
}
