//! Baseline partitioners that look only at each platform's full-workload
//! latency and cost, ignoring setup times and quantum rounding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{plan_from_allocation, AllocationMatrix, ClusterModel, Matrix, ModelError, PartitionPlan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeuristicError {
    #[error("platform {0} has zero full-workload latency")]
    ZeroMakespan(usize),
    #[error("no sweep weights given")]
    EmptyWeights,
    #[error("sweep weight {0} is outside [0, 1]")]
    InvalidWeight(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Cost weight of the sweep: 0 optimizes latency only, 1 cost only.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SweepWeight(f64);

impl SweepWeight {
    pub fn new(w: f64) -> Result<Self, HeuristicError> {
        if (0.0..=1.0).contains(&w) {
            Ok(SweepWeight(w))
        } else {
            Err(HeuristicError::InvalidWeight(w))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `count` weights evenly spaced over `[0, 1]`.
    pub fn evenly_spaced(count: usize) -> Vec<SweepWeight> {
        match count {
            0 => Vec::new(),
            1 => vec![SweepWeight(0.0)],
            _ => (0..count).map(|k| SweepWeight(k as f64 / (count - 1) as f64)).collect(),
        }
    }
}

impl TryFrom<f64> for SweepWeight {
    type Error = HeuristicError;

    fn try_from(w: f64) -> Result<Self, Self::Error> {
        SweepWeight::new(w)
    }
}

impl From<SweepWeight> for f64 {
    fn from(w: SweepWeight) -> f64 {
        w.0
    }
}

/// Index of the platform that runs the whole workload for the least money;
/// ties go to the faster platform, then the lower index.
pub fn cheapest_platform(cluster: &ClusterModel) -> usize {
    (0..cluster.platform_count())
        .min_by(|&a, &b| {
            cluster
                .full_workload_cost(a)
                .total_cmp(&cluster.full_workload_cost(b))
                .then(cluster.full_workload_latency(a).total_cmp(&cluster.full_workload_latency(b)))
                .then(a.cmp(&b))
        })
        .expect("cluster has at least one platform")
}

/// Everything on [`cheapest_platform`].
pub fn cheapest_single_platform(cluster: &ClusterModel) -> Result<PartitionPlan, HeuristicError> {
    let (mu, tau) = (cluster.platform_count(), cluster.task_count());
    let allocation = AllocationMatrix::single_platform(mu, tau, cheapest_platform(cluster));
    Ok(plan_from_allocation(cluster, &allocation)?)
}

fn makespans(cluster: &ClusterModel) -> Result<Vec<f64>, HeuristicError> {
    (0..cluster.platform_count())
        .map(|i| {
            let m = cluster.full_workload_latency(i);
            if m > 0.0 {
                Ok(m)
            } else {
                Err(HeuristicError::ZeroMakespan(i))
            }
        })
        .collect()
}

/// Plan giving every task the same split across platforms, given by
/// nonnegative per-platform `scores`.
fn proportional_plan(cluster: &ClusterModel, scores: &[f64]) -> Result<PartitionPlan, HeuristicError> {
    let total: f64 = scores.iter().sum();
    let raw = Matrix::from_fn(cluster.platform_count(), cluster.task_count(), |i, _| scores[i] / total);
    let allocation = AllocationMatrix::snapped(&raw)?;
    Ok(plan_from_allocation(cluster, &allocation)?)
}

/// Splits each task in inverse proportion to the platforms' full-workload
/// latencies.
pub fn inverse_makespan_split(cluster: &ClusterModel) -> Result<PartitionPlan, HeuristicError> {
    let m = makespans(cluster)?;
    let scores: Vec<f64> = m.iter().map(|x| 1.0 / x).collect();
    proportional_plan(cluster, &scores)
}

/// One plan per weight. Each platform gets a desirability
/// `(1 - w) * M_min / M_i + w * C_min / C_i` from its full-workload latency
/// `M_i` and cost `C_i`; platforms scoring at least `w` times the best take
/// part, in proportion to their desirability. `w = 0` is the inverse
/// makespan split and `w = 1` the cheapest single platform.
pub fn weighted_sweep(cluster: &ClusterModel, weights: &[SweepWeight]) -> Result<Vec<PartitionPlan>, HeuristicError> {
    if weights.is_empty() {
        return Err(HeuristicError::EmptyWeights);
    }
    let m = makespans(cluster)?;
    let c: Vec<f64> = (0..cluster.platform_count()).map(|i| cluster.full_workload_cost(i)).collect();
    let m_min = m.iter().copied().fold(f64::INFINITY, f64::min);
    let c_min = c.iter().copied().fold(f64::INFINITY, f64::min);
    let latency_score: Vec<f64> = m.iter().map(|&x| m_min / x).collect();
    let cost_score: Vec<f64> = c
        .iter()
        .map(|&x| {
            if x == c_min {
                1.0
            } else {
                c_min / x
            }
        })
        .collect();
    let cheapest = cheapest_platform(cluster);

    weights
        .iter()
        .map(|&w| {
            let w = w.value();
            if w == 1.0 {
                return cheapest_single_platform(cluster);
            }
            let v: Vec<f64> = latency_score.iter().zip(&cost_score).map(|(l, c)| (1.0 - w) * l + w * c).collect();
            let best = v.iter().copied().fold(0.0, f64::max);
            let scores: Vec<f64> = v.iter().map(|&x| if x >= w * best { x } else { 0.0 }).collect();
            if scores.iter().all(|&x| x == 0.0) {
                let mut single = vec![0.0; v.len()];
                single[cheapest] = 1.0;
                return proportional_plan(cluster, &single);
            }
            proportional_plan(cluster, &scores)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LatencyCoefficients, Platform, Task, Workload};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cluster(beta: Vec<Vec<f64>>, gamma: Vec<Vec<f64>>, work: Vec<u64>, quanta: &[(f64, f64)]) -> ClusterModel {
        ClusterModel::new(
            quanta
                .iter()
                .enumerate()
                .map(|(i, &(q, p))| Platform::new(format!("p{i}"), q, p).unwrap())
                .collect(),
            Workload::new(work.iter().enumerate().map(|(j, &n)| Task::new(format!("t{j}"), n)).collect()).unwrap(),
            LatencyCoefficients::new(Matrix::from_rows(beta).unwrap(), Matrix::from_rows(gamma).unwrap()).unwrap(),
        )
        .unwrap()
    }

    fn random_cluster(rng: &mut ChaCha8Rng, mu: usize, tau: usize, with_gamma: bool, equal_price: bool) -> ClusterModel {
        let beta = (0..mu).map(|_| (0..tau).map(|_| rng.random_range(1e-4..1e-2)).collect()).collect();
        let gamma = (0..mu)
            .map(|_| (0..tau).map(|_| if with_gamma { rng.random_range(0.0..5.0) } else { 0.0 }).collect())
            .collect();
        let work = (0..tau).map(|_| rng.random_range(1000..100_000)).collect();
        let quanta: Vec<(f64, f64)> = (0..mu)
            .map(|_| {
                let q = [1.0, 60.0, 600.0, 3600.0][rng.random_range(0..4)];
                let p = if equal_price { 1.0 } else { rng.random_range(0.1..2.0) };
                (q, p)
            })
            .collect();
        cluster(beta, gamma, work, &quanta)
    }

    #[test]
    fn single_platform_cluster() {
        let c = cluster(vec![vec![1e-3, 2e-3]], vec![vec![1.0, 1.0]], vec![100, 100], &[(1.0, 1.0)]);
        let plan = cheapest_single_platform(&c).unwrap();
        assert_eq!(plan.allocation.get(0, 0), 1.0);
        assert_eq!(plan.allocation.get(0, 1), 1.0);
    }

    #[test]
    fn cheaper_platform_is_chosen() {
        // Same speed, platform 1 is half the price.
        let c = cluster(vec![vec![1e-3], vec![1e-3]], vec![vec![0.0], vec![0.0]], vec![10_000], &[(1.0, 2.0), (1.0, 1.0)]);
        let plan = cheapest_single_platform(&c).unwrap();
        assert_eq!(plan.allocation.get(1, 0), 1.0);
        assert_eq!(plan.total_cost, 10.0);
    }

    #[test]
    fn cheapest_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let c = random_cluster(&mut rng, 16, 8, true, false);
            let plan = cheapest_single_platform(&c).unwrap();
            let mut best = f64::INFINITY;
            for i in 0..16 {
                let mut lat = 0.0;
                for j in 0..8 {
                    lat += c.beta(i, j) * c.workload().work(j) + c.gamma(i, j);
                }
                let p = &c.platforms()[i];
                best = best.min((lat / p.quantum_s).ceil() * p.price_per_quantum);
            }
            assert_eq!(plan.total_cost, best);
        }
    }

    #[test]
    fn tie_breaks_on_latency_then_index() {
        // Equal cost (both one quantum); platform 1 is faster.
        let c = cluster(vec![vec![2e-3], vec![1e-3]], vec![vec![0.0], vec![0.0]], vec![100], &[(3600.0, 1.0), (3600.0, 1.0)]);
        assert_eq!(cheapest_platform(&c), 1);
        let c = cluster(vec![vec![1e-3], vec![1e-3]], vec![vec![0.0], vec![0.0]], vec![100], &[(3600.0, 1.0), (3600.0, 1.0)]);
        assert_eq!(cheapest_platform(&c), 0);
    }

    #[test]
    fn inverse_split_examples() {
        let c = cluster(vec![vec![1e-3, 1e-3], vec![1e-3, 1e-3]], vec![vec![0.0; 2]; 2], vec![500, 500], &[(1.0, 1.0), (1.0, 1.0)]);
        let plan = inverse_makespan_split(&c).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((plan.allocation.get(i, j) - 0.5).abs() < 1e-12);
            }
        }
        // Full-workload latencies 1 and 3.
        let c = cluster(vec![vec![1e-3], vec![3e-3]], vec![vec![0.0], vec![0.0]], vec![1000], &[(1.0, 1.0), (1.0, 1.0)]);
        let plan = inverse_makespan_split(&c).unwrap();
        assert!((plan.allocation.get(0, 0) - 0.75).abs() < 1e-12);
        assert!((plan.allocation.get(1, 0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn split_beats_best_single_platform_without_setup() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let c = random_cluster(&mut rng, 4, 5, false, false);
            let plan = inverse_makespan_split(&c).unwrap();
            let m: Vec<f64> = (0..4).map(|i| c.full_workload_latency(i)).collect();
            let harmonic = 1.0 / m.iter().map(|x| 1.0 / x).sum::<f64>();
            let best = m.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(plan.makespan_s <= best + 1e-9);
            // Each platform's share of the total work time is harmonic / M_i,
            // so every platform finishes at the harmonic value.
            assert!((plan.makespan_s - harmonic).abs() <= 1e-9 * harmonic);
        }
    }

    #[test]
    fn sweep_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..20 {
            let c = random_cluster(&mut rng, 6, 4, true, false);
            let plans = weighted_sweep(&c, &[SweepWeight::new(0.0).unwrap(), SweepWeight::new(1.0).unwrap()]).unwrap();
            assert_eq!(plans[1].total_cost, cheapest_single_platform(&c).unwrap().total_cost);

            let c = random_cluster(&mut rng, 6, 4, false, true);
            let plans = weighted_sweep(&c, &[SweepWeight::new(0.0).unwrap()]).unwrap();
            let split = inverse_makespan_split(&c).unwrap();
            for i in 0..6 {
                for j in 0..4 {
                    assert!((plans[0].allocation.get(i, j) - split.allocation.get(i, j)).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(SweepWeight::new(1.5).is_err());
        assert!(SweepWeight::new(-0.1).is_err());
        let c = cluster(vec![vec![1e-3]], vec![vec![0.0]], vec![10], &[(1.0, 1.0)]);
        assert_eq!(weighted_sweep(&c, &[]), Err(HeuristicError::EmptyWeights));
        let w: SweepWeight = serde_json::from_str("0.5").unwrap();
        assert_eq!(w.value(), 0.5);
        assert!(serde_json::from_str::<SweepWeight>("2.0").is_err());
    }

    #[test]
    fn plans_satisfy_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let c = random_cluster(&mut rng, 5, 7, true, false);
            let plans = weighted_sweep(&c, &SweepWeight::evenly_spaced(7)).unwrap();
            for p in plans {
                for j in 0..7 {
                    let s: f64 = p.allocation.matrix().column(j).sum();
                    assert!((s - 1.0).abs() <= 1e-9);
                }
                let max = p.platform_latency_s.iter().copied().fold(0.0, f64::max);
                assert_eq!(p.makespan_s, max);
            }
        }
    }
}
