//! Replays a plan against perturbed platform behaviour.
//!
//! Shares become whole work units, every coefficient is scaled by a draw of
//! `1 + eps` with `eps` a truncated normal, and each platform runs its
//! shares back to back. The result is the makespan and bill the plan would
//! actually have produced.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::models::{billed_quanta, AllocationMatrix, ClusterModel, PartitionPlan, Workload};
use crate::rng::{stream, BoxMuller};

/// Noise draws are cut off at this many standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("plan is {found:?} but the cluster is {expected:?}")]
    DimensionMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("noise sigma must be finite and nonnegative, got {0}")]
    InvalidSigma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub beta_rel_sigma: f64,
    pub gamma_rel_sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(beta_rel_sigma: f64, gamma_rel_sigma: f64, seed: u64) -> Result<Self, SimError> {
        for s in [beta_rel_sigma, gamma_rel_sigma] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(SimError::InvalidSigma(s));
            }
        }
        Ok(NoiseSpec {
            beta_rel_sigma,
            gamma_rel_sigma,
            seed,
        })
    }

    pub fn none() -> Self {
        NoiseSpec {
            beta_rel_sigma: 0.0,
            gamma_rel_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        NoiseSpec { seed, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub realized_platform_latency_s: Vec<f64>,
    pub realized_makespan_s: f64,
    pub realized_cost: f64,
    pub predicted_makespan_s: f64,
    /// `|realized - predicted| / realized`.
    pub relative_makespan_error: f64,
}

/// Whole work units per (platform, task). Each entry is the share rounded
/// to nearest (ties to even); the platform with the largest share of the
/// task, lowest index first, absorbs whatever is left so columns sum to the
/// task's work exactly.
pub fn integerize_allocation(allocation: &AllocationMatrix, workload: &Workload) -> Vec<Vec<u64>> {
    let (mu, tau) = allocation.shape();
    let mut units = vec![vec![0u64; tau]; mu];
    for (j, task) in workload.tasks().iter().enumerate().take(tau) {
        let n = task.work;
        let mut assigned: u64 = 0;
        let mut owner = 0;
        for i in 0..mu {
            let share = allocation.get(i, j);
            if share > allocation.get(owner, j) {
                owner = i;
            }
            let u = (share * n as f64).round_ties_even().max(0.0) as u64;
            units[i][j] = u;
            assigned += u;
        }
        if assigned <= n {
            units[owner][j] += n - assigned;
            continue;
        }
        // Rounding overshot: take the excess from the owner first, then
        // from the others in index order.
        let mut excess = assigned - n;
        for i in std::iter::once(owner).chain(0..mu) {
            let take = excess.min(units[i][j]);
            units[i][j] -= take;
            excess -= take;
            if excess == 0 {
                break;
            }
        }
    }
    units
}

fn multipliers(sigma: f64, seed: u64, stream_id: u64, count: usize) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0; count];
    }
    let mut rng = stream(seed, stream_id);
    let mut normal = BoxMuller::new();
    (0..count).map(|_| 1.0 + sigma * normal.sample_truncated(&mut rng, TRUNCATION_SIGMAS)).collect()
}

pub fn simulate(plan: &PartitionPlan, cluster: &ClusterModel, noise: &NoiseSpec) -> Result<SimResult, SimError> {
    let expected = (cluster.platform_count(), cluster.task_count());
    if plan.allocation.shape() != expected {
        return Err(SimError::DimensionMismatch {
            expected,
            found: plan.allocation.shape(),
        });
    }
    for s in [noise.beta_rel_sigma, noise.gamma_rel_sigma] {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(SimError::InvalidSigma(s));
        }
    }
    let (mu, tau) = expected;
    let beta_scale = multipliers(noise.beta_rel_sigma, noise.seed, 0, mu * tau);
    let gamma_scale = multipliers(noise.gamma_rel_sigma, noise.seed, 1, mu * tau);
    let units = integerize_allocation(&plan.allocation, cluster.workload());

    let mut latency = vec![0.0; mu];
    let mut cost = 0.0;
    for i in 0..mu {
        let mut busy = false;
        for j in 0..tau {
            if units[i][j] > 0 {
                busy = true;
                let k = i * tau + j;
                latency[i] += cluster.beta(i, j) * beta_scale[k] * units[i][j] as f64 + cluster.gamma(i, j) * gamma_scale[k];
            }
        }
        if busy {
            let p = &cluster.platforms()[i];
            cost += billed_quanta(latency[i], p.quantum_s) as f64 * p.price_per_quantum;
        }
    }
    let realized = latency.iter().copied().fold(0.0, f64::max);
    let error = if realized > 0.0 {
        (realized - plan.makespan_s).abs() / realized
    } else {
        0.0
    };
    Ok(SimResult {
        realized_platform_latency_s: latency,
        realized_makespan_s: realized,
        realized_cost: cost,
        predicted_makespan_s: plan.makespan_s,
        relative_makespan_error: error,
    })
}

/// One simulation per seed in `seeds`, other noise settings from `noise`.
pub fn simulate_many(
    plan: &PartitionPlan,
    cluster: &ClusterModel,
    noise: &NoiseSpec,
    seeds: std::ops::Range<u64>,
    exec: Execution,
) -> Result<Vec<SimResult>, SimError> {
    exec.map_range(seeds, |seed| simulate(plan, cluster, &noise.with_seed(seed))).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{plan_from_allocation, LatencyCoefficients, Matrix, Platform, Task};
    use crate::synth::{generate, Profile, SynthSpec};
    use proptest::prelude::*;

    fn workload(work: &[u64]) -> Workload {
        Workload::new(work.iter().enumerate().map(|(j, &n)| Task::new(format!("t{j}"), n)).collect()).unwrap()
    }

    fn allocation(rows: Vec<Vec<f64>>) -> AllocationMatrix {
        AllocationMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let units = integerize_allocation(&allocation(vec![vec![0.5], vec![0.5]]), &workload(&[1001]));
        assert_eq!(units, vec![vec![501], vec![500]]);
    }

    #[test]
    fn whole_task_stays_whole() {
        let units = integerize_allocation(&allocation(vec![vec![1.0], vec![0.0]]), &workload(&[7]));
        assert_eq!(units, vec![vec![7], vec![0]]);
    }

    proptest! {
        #[test]
        fn columns_sum_to_work(
            raw in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..5),
            work in prop::collection::vec(0u64..100_000, 4),
        ) {
            let mu = raw.len();
            let rows: Vec<Vec<f64>> = (0..mu)
                .map(|i| (0..4).map(|j| {
                    let total: f64 = raw.iter().map(|r| r[j]).sum();
                    if total > 0.0 { raw[i][j] / total } else if i == 0 { 1.0 } else { 0.0 }
                }).collect())
                .collect();
            let a = AllocationMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap();
            let w = workload(&work);
            let units = integerize_allocation(&a, &w);
            for j in 0..4 {
                prop_assert_eq!(units.iter().map(|r| r[j]).sum::<u64>(), work[j]);
            }
        }
    }

    fn small_cluster() -> ClusterModel {
        generate(&SynthSpec::new(Profile::Fleet, 4, 6, 9)).unwrap()
    }

    fn split_plan(c: &ClusterModel) -> PartitionPlan {
        crate::heuristic::inverse_makespan_split(c).unwrap()
    }

    #[test]
    fn zero_noise_matches_the_plan() {
        let c = small_cluster();
        let plan = split_plan(&c);
        let r = simulate(&plan, &c, &NoiseSpec::none()).unwrap();
        let max_beta = c.coeffs().beta().values().iter().copied().fold(0.0, f64::max);
        assert!(r.relative_makespan_error <= max_beta / plan.makespan_s, "{r:?}");
        for i in 0..4 {
            assert!((r.realized_platform_latency_s[i] - plan.platform_latency_s[i]).abs() <= max_beta);
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let c = small_cluster();
        let plan = split_plan(&c);
        let noise = NoiseSpec::new(0.05, 0.05, 17).unwrap();
        assert_eq!(simulate(&plan, &c, &noise).unwrap(), simulate(&plan, &c, &noise).unwrap());
        assert_ne!(simulate(&plan, &c, &noise).unwrap(), simulate(&plan, &c, &noise.with_seed(18)).unwrap());
        let seq = simulate_many(&plan, &c, &noise, 0..20, Execution::Sequential).unwrap();
        let par = simulate_many(&plan, &c, &noise, 0..20, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn billing_never_undercharges() {
        let c = small_cluster();
        let plan = split_plan(&c);
        for r in simulate_many(&plan, &c, &NoiseSpec::new(0.1, 0.1, 0).unwrap(), 0..50, Execution::Sequential).unwrap() {
            let exact: f64 = (0..4)
                .filter(|&i| r.realized_platform_latency_s[i] > 0.0)
                .map(|i| r.realized_platform_latency_s[i] / c.platforms()[i].quantum_s * c.platforms()[i].price_per_quantum)
                .sum();
            assert!(r.realized_cost >= exact - 1e-9);
            assert_eq!(r.realized_makespan_s, r.realized_platform_latency_s.iter().copied().fold(0.0, f64::max));
        }
    }

    #[test]
    fn noise_is_unbiased_on_average() {
        let c = small_cluster();
        let plan = split_plan(&c);
        let runs = simulate_many(&plan, &c, &NoiseSpec::new(0.05, 0.05, 0).unwrap(), 0..200, Execution::Parallel).unwrap();
        let ratio = runs.iter().map(|r| r.realized_makespan_s / r.predicted_makespan_s).sum::<f64>() / runs.len() as f64;
        assert!((0.97..=1.03).contains(&ratio), "{ratio}");
    }

    #[test]
    fn setup_is_charged_per_supported_pair() {
        let c = ClusterModel::new(
            vec![Platform::new("a", 10.0, 1.0).unwrap()],
            workload(&[100, 50]),
            LatencyCoefficients::new(Matrix::filled(1, 2, 0.1), Matrix::filled(1, 2, 1.5)).unwrap(),
        )
        .unwrap();
        let plan = plan_from_allocation(&c, &AllocationMatrix::single_platform(1, 2, 0)).unwrap();
        let r = simulate(&plan, &c, &NoiseSpec::none()).unwrap();
        assert!((r.realized_makespan_s - 18.0).abs() < 1e-12);
        assert_eq!(r.realized_cost, 2.0);
    }

    #[test]
    fn rejects_mismatched_plans() {
        let c = small_cluster();
        let other = generate(&SynthSpec::new(Profile::Fleet, 3, 6, 9)).unwrap();
        let plan = split_plan(&other);
        assert!(matches!(simulate(&plan, &c, &NoiseSpec::none()), Err(SimError::DimensionMismatch { .. })));
        assert!(NoiseSpec::new(-0.1, 0.0, 0).is_err());
    }
}
