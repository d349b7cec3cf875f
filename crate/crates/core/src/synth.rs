//! Synthetic clusters for tests and demos.
//!
//! Platforms are drawn from archetypes loosely shaped like a mixed CPU, GPU
//! and FPGA rental fleet: a fast hourly-billed GPU, slow CPUs with minute or
//! ten-minute quanta, and high-throughput FPGA boards with large per-task
//! setup times. Task sizes come from sizing Monte Carlo option pricing runs
//! to a target accuracy.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::{required_paths, BenchError, McOption};
use crate::models::{ClusterModel, LatencyCoefficients, Matrix, ModelError, Platform, Task, Workload};
use crate::rng::stream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("need at least one platform and one task")]
    EmptyShape,
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Rental fleet with realistic relative speeds and prices.
    Fleet,
    /// Setup times and quanta chosen so that ignoring them is costly.
    Adversarial,
    /// Identical platforms without setup time or quantum effects.
    Symmetric,
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fleet" => Ok(Profile::Fleet),
            "adversarial" => Ok(Profile::Adversarial),
            "symmetric" => Ok(Profile::Symmetric),
            _ => Err(format!("unknown profile `{s}` (expected fleet, adversarial or symmetric)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Archetype {
    name: &'static str,
    /// Throughput relative to the other archetypes.
    throughput: f64,
    price_per_hour: f64,
    quantum_s: f64,
    setup_s: f64,
}

const GPU: Archetype = Archetype {
    name: "gpu",
    throughput: 556.0,
    price_per_hour: 0.65,
    quantum_s: 3600.0,
    setup_s: 2.0,
};
const CPU_FINE: Archetype = Archetype {
    name: "cpu-1m",
    throughput: 4.2,
    price_per_hour: 0.48,
    quantum_s: 60.0,
    setup_s: 0.1,
};
const CPU_TEN: Archetype = Archetype {
    name: "cpu-10m",
    throughput: 6.0,
    price_per_hour: 0.35,
    quantum_s: 600.0,
    setup_s: 0.1,
};
const FPGA_SMALL: Archetype = Archetype {
    name: "fpga-a",
    throughput: 112.0,
    price_per_hour: 0.44,
    quantum_s: 3600.0,
    setup_s: 15.0,
};
const FPGA_LARGE: Archetype = Archetype {
    name: "fpga-b",
    throughput: 177.0,
    price_per_hour: 0.69,
    quantum_s: 3600.0,
    setup_s: 20.0,
};

/// Platform mix in the order platforms are added; a 16-platform fleet has
/// one GPU, two CPUs and thirteen FPGA boards.
const FLEET_ORDER: [Archetype; 16] = [
    GPU, CPU_TEN, FPGA_SMALL, CPU_FINE, FPGA_LARGE, FPGA_SMALL, FPGA_SMALL, FPGA_SMALL, FPGA_SMALL, FPGA_SMALL,
    FPGA_SMALL, FPGA_SMALL, FPGA_SMALL, FPGA_SMALL, FPGA_SMALL, FPGA_SMALL,
];

const ADVERSARIAL_ORDER: [Archetype; 4] = [
    GPU,
    Archetype {
        name: "fpga-setup",
        throughput: 900.0,
        price_per_hour: 0.9,
        quantum_s: 3600.0,
        setup_s: 150.0,
    },
    Archetype {
        name: "cpu-1m",
        throughput: 60.0,
        price_per_hour: 0.08,
        quantum_s: 60.0,
        setup_s: 0.5,
    },
    Archetype {
        name: "gpu-spot",
        throughput: 300.0,
        price_per_hour: 1.6,
        quantum_s: 3600.0,
        setup_s: 5.0,
    },
];

/// Time the GPU archetype needs for the whole workload.
const GPU_WORKLOAD_S: f64 = 8700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub profile: Profile,
    pub platforms: usize,
    pub tasks: usize,
    pub seed: u64,
    /// Standard error each pricing task must reach; sets the path counts.
    pub accuracy: f64,
}

impl SynthSpec {
    pub fn new(profile: Profile, platforms: usize, tasks: usize, seed: u64) -> Self {
        SynthSpec {
            profile,
            platforms,
            tasks,
            seed,
            accuracy: 0.001,
        }
    }
}

fn random_option<R: Rng>(rng: &mut R) -> McOption {
    McOption {
        spot: rng.random_range(80.0..120.0),
        strike: rng.random_range(80.0..120.0),
        rate: rng.random_range(0.01..0.06),
        volatility: rng.random_range(0.1..0.4),
        maturity: rng.random_range(0.25..2.0),
    }
}

/// Monte Carlo path counts for `tasks` random options at `accuracy`.
pub fn option_workload(tasks: usize, accuracy: f64, seed: u64) -> Result<Vec<(McOption, u64)>, SynthError> {
    let mut rng = stream(seed, 1);
    (0..tasks)
        .map(|j| {
            let option = random_option(&mut rng);
            let paths = required_paths(&option, accuracy, 2000, seed.wrapping_add(j as u64))?;
            Ok((option, paths))
        })
        .collect()
}

pub fn generate(spec: &SynthSpec) -> Result<ClusterModel, SynthError> {
    if spec.platforms == 0 || spec.tasks == 0 {
        return Err(SynthError::EmptyShape);
    }
    let (mu, tau) = (spec.platforms, spec.tasks);
    let work: Vec<u64> = match spec.profile {
        Profile::Symmetric => vec![1_000_000; tau],
        _ => option_workload(tau, spec.accuracy, spec.seed)?.into_iter().map(|(_, n)| n.max(1)).collect(),
    };
    let total_work: f64 = work.iter().map(|&n| n as f64).sum();
    let mut rng = stream(spec.seed, 2);

    let archetypes: Vec<Archetype> = (0..mu)
        .map(|i| match spec.profile {
            Profile::Fleet => FLEET_ORDER[i % FLEET_ORDER.len()],
            Profile::Adversarial => ADVERSARIAL_ORDER[i % ADVERSARIAL_ORDER.len()],
            Profile::Symmetric => Archetype {
                name: "node",
                throughput: 1.0,
                price_per_hour: 1.0,
                quantum_s: 1.0,
                setup_s: 0.0,
            },
        })
        .collect();

    let gpu_beta = match spec.profile {
        Profile::Symmetric => 1e-6,
        _ => GPU_WORKLOAD_S / total_work,
    };
    let mut beta = Matrix::zeros(mu, tau);
    let mut gamma = Matrix::zeros(mu, tau);
    let mut platforms = Vec::with_capacity(mu);
    for (i, a) in archetypes.iter().enumerate() {
        let (speed_jitter, price_jitter) = match spec.profile {
            Profile::Symmetric => (1.0, 1.0),
            _ => (rng.random_range(0.9..1.1), rng.random_range(0.95..1.05)),
        };
        let base = gpu_beta * GPU.throughput / a.throughput * speed_jitter;
        for j in 0..tau {
            let (bj, gj) = match spec.profile {
                Profile::Symmetric => (1.0, 1.0),
                _ => (rng.random_range(0.9..1.1), rng.random_range(0.5..1.5)),
            };
            beta.set(i, j, base * bj);
            gamma.set(i, j, a.setup_s * gj);
        }
        platforms.push(Platform::from_hourly_rate(format!("{}-{i}", a.name), a.quantum_s, a.price_per_hour * price_jitter)?);
    }
    let tasks = work.iter().enumerate().map(|(j, &n)| Task::new(format!("option-{j}"), n)).collect();
    Ok(ClusterModel::new(platforms, Workload::new(tasks)?, LatencyCoefficients::new(beta, gamma)?)?)
}
