use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::exec::Execution;
use crate::rng::{stream, BoxMuller};

/// Paths simulated per random stream.
pub const PATH_BLOCK: u64 = 1 << 16;

/// European call on a geometric Brownian motion underlying.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOption {
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    pub volatility: f64,
    pub maturity: f64,
}

impl McOption {
    pub fn validate(&self) -> Result<(), BenchError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(BenchError::InvalidOption(format!("{name} must be positive, got {v}")))
            }
        };
        positive("spot", self.spot)?;
        positive("strike", self.strike)?;
        positive("volatility", self.volatility)?;
        positive("maturity", self.maturity)?;
        if !self.rate.is_finite() {
            return Err(BenchError::InvalidOption(format!("rate must be finite, got {}", self.rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Running count, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if other.n == 0.0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * other.n / n,
            m2: self.m2 + other.m2 + d * d * self.n * other.n / n,
        }
    }
}

/// Monte Carlo price of `option` from `paths` simulated terminal prices.
pub fn mc_price(option: &McOption, paths: u64, seed: u64) -> Result<McEstimate, BenchError> {
    mc_price_with(option, paths, seed, Execution::default())
}

/// [`mc_price`] with an explicit execution strategy. Path blocks use fixed
/// streams and are merged in block order, so the result does not depend on
/// the strategy.
pub fn mc_price_with(option: &McOption, paths: u64, seed: u64, exec: Execution) -> Result<McEstimate, BenchError> {
    option.validate()?;
    if paths < 2 {
        return Err(BenchError::InvalidPaths(paths));
    }
    let blocks = paths.div_ceil(PATH_BLOCK);
    let drift = (option.rate - 0.5 * option.volatility * option.volatility) * option.maturity;
    let diffusion = option.volatility * option.maturity.sqrt();
    let discount = (-option.rate * option.maturity).exp();
    let partial = exec.map_range(0..blocks, |b| {
        let mut rng = stream(seed, b);
        let mut normal = BoxMuller::new();
        let count = PATH_BLOCK.min(paths - b * PATH_BLOCK);
        let mut m = Moments::default();
        for _ in 0..count {
            let terminal = option.spot * (drift + diffusion * normal.sample(&mut rng)).exp();
            m.push(discount * (terminal - option.strike).max(0.0));
        }
        m
    });
    let m = partial.into_iter().fold(Moments::default(), Moments::merge);
    let sd = (m.m2 / (m.n - 1.0)).max(0.0).sqrt();
    Ok(McEstimate {
        estimate: m.mean,
        stderr: sd / m.n.sqrt(),
    })
}

/// Paths needed for a standard error of `target` given a per-path standard
/// deviation; at least one.
pub fn paths_for_accuracy(stddev: f64, target: f64) -> Result<u64, BenchError> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(BenchError::InvalidTarget(target));
    }
    let q = (stddev / target).powi(2);
    // Absorb representation error so exact ratios are not pushed up by one.
    let q = if (q - q.round()).abs() <= 1e-9 * q.max(1.0) { q.round() } else { q };
    Ok((q.ceil() as u64).max(1))
}

/// Runs a pilot of `pilot_paths` and sizes the full run for `target`
/// standard error.
pub fn required_paths(option: &McOption, target: f64, pilot_paths: u64, seed: u64) -> Result<u64, BenchError> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(BenchError::InvalidTarget(target));
    }
    if pilot_paths < 100 {
        return Err(BenchError::InvalidPaths(pilot_paths));
    }
    let pilot = mc_price(option, pilot_paths, seed)?;
    paths_for_accuracy(pilot.stderr * (pilot_paths as f64).sqrt(), target)
}

/// Closed-form Black–Scholes price of the same call.
pub fn black_scholes_call(option: &McOption) -> f64 {
    let sqrt_t = option.maturity.sqrt();
    let d1 = ((option.spot / option.strike).ln() + (option.rate + 0.5 * option.volatility.powi(2)) * option.maturity)
        / (option.volatility * sqrt_t);
    let d2 = d1 - option.volatility * sqrt_t;
    option.spot * normal_cdf(d1) - option.strike * (-option.rate * option.maturity).exp() * normal_cdf(d2)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Complementary error function (Numerical Recipes `erfcc`, relative
/// error below 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}
