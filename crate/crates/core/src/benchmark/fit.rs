use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::rng::{stream, BoxMuller};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSample {
    pub work: u64,
    pub latency_s: f64,
}

impl BenchmarkSample {
    pub fn new(work: u64, latency_s: f64) -> Result<Self, BenchError> {
        if !(latency_s > 0.0 && latency_s.is_finite()) {
            return Err(BenchError::InvalidSample(format!("latency must be positive and finite, got {latency_s}")));
        }
        Ok(BenchmarkSample { work, latency_s })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: f64,
    pub gamma: f64,
    /// Largest relative error over the training samples.
    pub max_relative_error: f64,
    pub sample_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn predict(&self, work: u64) -> f64 {
        self.beta * work as f64 + self.gamma
    }
}

/// Weighted least squares fit of `latency = beta * work + gamma` with
/// weights `1 / latency^2`, i.e. minimizing squared relative error.
pub fn fit_latency_model(samples: &[BenchmarkSample]) -> Result<FitResult, BenchError> {
    if samples.len() < 2 {
        return Err(BenchError::InsufficientSamples(samples.len()));
    }
    for (k, s) in samples.iter().enumerate() {
        if !(s.latency_s > 0.0 && s.latency_s.is_finite()) {
            return Err(BenchError::InvalidSample(format!("sample {k} has latency {}", s.latency_s)));
        }
    }
    // Summation order is fixed so the result does not depend on input order.
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.work.cmp(&b.work).then(a.latency_s.total_cmp(&b.latency_s)));
    if sorted.first().map(|s| s.work) == sorted.last().map(|s| s.work) {
        return Err(BenchError::DegenerateDesign);
    }

    let weight = |s: &BenchmarkSample| 1.0 / (s.latency_s * s.latency_s);
    let total: f64 = sorted.iter().map(weight).sum();
    let mean_x = sorted.iter().map(|s| weight(s) * s.work as f64).sum::<f64>() / total;
    let mean_y = sorted.iter().map(|s| weight(s) * s.latency_s).sum::<f64>() / total;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for s in &sorted {
        let w = weight(s);
        let dx = s.work as f64 - mean_x;
        sxx += w * dx * dx;
        sxy += w * dx * (s.latency_s - mean_y);
    }
    let mut beta = sxy / sxx;
    let mut gamma = mean_y - beta * mean_x;
    let mut warnings = Vec::new();
    if gamma < 0.0 {
        // Refit through the origin.
        let num: f64 = sorted.iter().map(|s| weight(s) * s.work as f64 * s.latency_s).sum();
        let den: f64 = sorted.iter().map(|s| weight(s) * (s.work as f64).powi(2)).sum();
        warnings.push(format!("intercept {gamma:.3e} s was negative and has been clamped to 0"));
        beta = num / den;
        gamma = 0.0;
    }
    if !(beta > 0.0) {
        return Err(BenchError::NonpositiveSlope(beta));
    }
    let mut fit = FitResult {
        beta,
        gamma,
        max_relative_error: 0.0,
        sample_count: samples.len(),
        warnings,
    };
    fit.max_relative_error = relative_errors(&fit, samples).fold(0.0, f64::max);
    Ok(fit)
}

fn relative_errors<'a>(fit: &'a FitResult, samples: &'a [BenchmarkSample]) -> impl Iterator<Item = f64> + 'a {
    samples.iter().map(move |s| (fit.predict(s.work) - s.latency_s).abs() / s.latency_s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub relative_errors: Vec<f64>,
    pub mean: f64,
    pub max: f64,
}

/// Relative error `|predicted - observed| / observed` on each holdout sample.
pub fn prediction_error(fit: &FitResult, holdout: &[BenchmarkSample]) -> Result<PredictionReport, BenchError> {
    if holdout.is_empty() {
        return Err(BenchError::EmptyHoldout);
    }
    let relative_errors: Vec<f64> = relative_errors(fit, holdout).collect();
    let mean = relative_errors.iter().sum::<f64>() / relative_errors.len() as f64;
    let max = relative_errors.iter().copied().fold(0.0, f64::max);
    Ok(PredictionReport { relative_errors, mean, max })
}

/// Work sizes for a benchmarking session: `points` sizes spaced
/// geometrically over a `span`-fold range, each run `repeats` times, scaled
/// so the predicted total run time equals `budget_s`.
pub fn budgeted_work_sizes(
    beta: f64,
    gamma: f64,
    budget_s: f64,
    points: usize,
    repeats: usize,
    span: f64,
) -> Result<Vec<u64>, BenchError> {
    if points < 2 || repeats == 0 || !(span > 1.0) {
        return Err(BenchError::InvalidPlan("need at least 2 points, 1 repeat and a span above 1".into()));
    }
    let ratios: Vec<f64> = (0..points).map(|k| span.powf(k as f64 / (points - 1) as f64)).collect();
    let runs = (points * repeats) as f64;
    let work_time = budget_s - runs * gamma;
    if !(work_time > 0.0) || !(beta > 0.0) {
        return Err(BenchError::InvalidPlan(format!("budget {budget_s} s does not cover the setup time")));
    }
    let base = work_time / (beta * repeats as f64 * ratios.iter().sum::<f64>());
    let mut sizes = Vec::with_capacity(points * repeats);
    for r in &ratios {
        let n = (base * r).round().max(1.0) as u64;
        sizes.extend(std::iter::repeat_n(n, repeats));
    }
    Ok(sizes)
}

/// Timing samples on the line `beta * work + gamma` with multiplicative
/// normal noise of relative standard deviation `noise`, truncated at three
/// sigma.
pub fn synthetic_samples(beta: f64, gamma: f64, works: &[u64], noise: f64, seed: u64) -> Vec<BenchmarkSample> {
    let mut rng = stream(seed, 0);
    let mut normal = BoxMuller::new();
    works
        .iter()
        .map(|&n| {
            let eps = if noise > 0.0 { noise * normal.sample_truncated(&mut rng, 3.0) } else { 0.0 };
            BenchmarkSample {
                work: n,
                latency_s: (beta * n as f64 + gamma) * (1.0 + eps),
            }
        })
        .collect()
}
