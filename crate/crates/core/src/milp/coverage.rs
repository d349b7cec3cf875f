//! Combinatorial makespan bound for the partitioning program.
//!
//! In any feasible plan, platform `i` works for at most
//! `T_i = min(F, quantum_i * D_i)` seconds, and because `B >= A` every share
//! costs at least `(beta N + gamma) A` of that time. The fraction of the
//! total work it can cover is therefore at most the fractional-knapsack
//! value of `T_i` over its tasks. Coverage must reach one, and the integer
//! quanta must fit the cost cap; the smallest `F` for which some quanta
//! vector achieves this is a valid lower bound on the makespan. Unlike the
//! linear relaxation it charges whole quanta, which is what makes it useful
//! under tight caps.
//!
//! The per-platform argument lets two platforms claim the same work, so a
//! quanta vector that passes it is checked against the linear program for
//! exactly those quanta, with setup time charged per share. That program is
//! still a relaxation of the real one, so the bound stays valid.

use std::collections::HashMap;

use super::rounding::quanta_makespan_bound;
use crate::models::ClusterModel;

/// Coverage short of one by less than this is treated as full coverage,
/// which keeps the bound on the safe side of round-off.
const COVERAGE_TOL: f64 = 1e-9;
const SEARCH_STEPS: usize = 60;
/// Knapsack nodes explored per probe before giving up on it.
const NODE_BUDGET: usize = 200_000;
/// Quanta vectors checked against the linear program per bound before
/// giving up on further checks.
const CHECK_BUDGET: usize = 400;

struct PlatformCoverage {
    /// Cumulative seconds and work fractions of the tasks in decreasing
    /// order of work per second.
    seconds: Vec<f64>,
    fraction: Vec<f64>,
    quantum: f64,
    price: f64,
    max_quanta: u64,
}

impl PlatformCoverage {
    /// Largest fraction of the work that fits into `t` seconds.
    fn covered(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let k = self.seconds.partition_point(|&s| s <= t);
        if k == 0 {
            return self.fraction[0] * t / self.seconds[0];
        }
        if k == self.seconds.len() {
            return self.fraction[k - 1];
        }
        let (s0, f0) = (self.seconds[k - 1], self.fraction[k - 1]);
        let (s1, f1) = (self.seconds[k], self.fraction[k]);
        f0 + (f1 - f0) * (t - s0) / (s1 - s0)
    }

    fn value(&self, makespan: f64, quanta: u64) -> f64 {
        self.covered(makespan.min(self.quantum * quanta as f64))
    }

    /// Quanta beyond which more time does not help.
    fn useful_quanta(&self, makespan: f64) -> u64 {
        ((makespan / self.quantum).ceil() as u64).min(self.max_quanta)
    }
}

fn coverage_table(cluster: &ClusterModel) -> Option<Vec<PlatformCoverage>> {
    let tau = cluster.task_count();
    let total: f64 = (0..tau).map(|j| cluster.workload().work(j)).sum();
    if !(total > 0.0) {
        return None;
    }
    let mut table = Vec::with_capacity(cluster.platform_count());
    for (i, platform) in cluster.platforms().iter().enumerate() {
        let mut tasks: Vec<(f64, f64)> = (0..tau)
            .map(|j| {
                let secs = cluster.proportional_latency(i, j) + cluster.gamma(i, j);
                (secs, cluster.workload().work(j) / total)
            })
            .filter(|&(_, f)| f > 0.0)
            .collect();
        if tasks.iter().any(|&(s, _)| !(s > 0.0)) {
            // Free work makes the bound vacuous.
            return None;
        }
        tasks.sort_by(|a, b| (b.1 / b.0).total_cmp(&(a.1 / a.0)));
        let mut seconds = Vec::with_capacity(tasks.len());
        let mut fraction = Vec::with_capacity(tasks.len());
        let (mut s, mut f) = (0.0, 0.0);
        for (secs, frac) in tasks {
            s += secs;
            f += frac;
            seconds.push(s);
            fraction.push(f);
        }
        table.push(PlatformCoverage {
            quantum: platform.quantum_s,
            price: platform.price_per_quantum,
            max_quanta: (cluster.full_workload_latency(i) / platform.quantum_s).ceil() as u64,
            seconds,
            fraction,
        });
    }
    Some(table)
}

/// Cached makespan bounds per quanta vector.
struct QuantaCheck<'c> {
    cluster: &'c ClusterModel,
    known: HashMap<Vec<u64>, f64>,
    remaining: usize,
}

impl<'c> QuantaCheck<'c> {
    fn new(cluster: &'c ClusterModel) -> Self {
        QuantaCheck {
            cluster,
            known: HashMap::new(),
            remaining: CHECK_BUDGET,
        }
    }

    fn probe(&mut self, quanta: &[u64], makespan: f64) -> Probe {
        let bound = match self.known.get(quanta) {
            Some(&b) => b,
            None if self.remaining == 0 => return Probe::Unknown,
            None => {
                self.remaining -= 1;
                let b = quanta_makespan_bound(self.cluster, quanta);
                self.known.insert(quanta.to_vec(), b);
                b
            }
        };
        // Only a clear excess counts as a proof.
        if bound > makespan * (1.0 + 1e-7) {
            Probe::Short
        } else {
            Probe::Covered
        }
    }
}

/// Outcome of one probe: can the work be covered within `makespan`?
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Probe {
    Covered,
    Short,
    Unknown,
}

struct Knapsack<'a, 'c> {
    table: &'a [PlatformCoverage],
    check: &'a mut QuantaCheck<'c>,
    makespan: f64,
    /// Platforms in search order.
    order: Vec<usize>,
    /// Marginal gains per quantum, sorted by gain per price, tagged with
    /// their platform's position in `order`.
    increments: Vec<(usize, f64, f64)>,
    nodes: usize,
    /// Quanta per platform on the current search path.
    chosen: Vec<u64>,
    /// When set, covered vectors are recorded here and the search goes on
    /// until this many are found.
    collect: Option<(usize, Vec<Vec<u64>>)>,
}

impl<'a, 'c> Knapsack<'a, 'c> {
    fn new(table: &'a [PlatformCoverage], check: &'a mut QuantaCheck<'c>, makespan: f64) -> Self {
        let mut order: Vec<usize> = (0..table.len()).collect();
        let best_ratio = |i: usize| {
            let p = &table[i];
            if p.price <= 0.0 {
                return f64::INFINITY;
            }
            p.value(makespan, 1) / p.price
        };
        // Few choices first; the last platform simply takes what the budget
        // allows, so the one with the most choices goes there.
        order.sort_by(|&a, &b| {
            let choices = |i: usize| table[i].useful_quanta(makespan);
            choices(a).cmp(&choices(b)).then(best_ratio(b).total_cmp(&best_ratio(a))).then(a.cmp(&b))
        });
        let mut increments = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            let p = &table[i];
            let mut prev = 0.0;
            for d in 1..=p.useful_quanta(makespan) {
                let v = p.value(makespan, d);
                increments.push((pos, v - prev, p.price));
                prev = v;
            }
        }
        increments.sort_by(|a, b| {
            let ra = if a.2 > 0.0 { a.1 / a.2 } else { f64::INFINITY };
            let rb = if b.2 > 0.0 { b.1 / b.2 } else { f64::INFINITY };
            rb.total_cmp(&ra)
        });
        Knapsack {
            table,
            check,
            makespan,
            order,
            increments,
            nodes: 0,
            chosen: vec![0; table.len()],
            collect: None,
        }
    }

    /// Fractional relaxation over the platforms from `pos` on. Per-platform
    /// gains shrink with each extra quantum, so taking increments greedily
    /// by ratio bounds every integer choice.
    fn relaxed_gain(&self, pos: usize, mut budget: f64) -> f64 {
        let mut gain = 0.0;
        for &(p, delta, price) in &self.increments {
            if p < pos {
                continue;
            }
            if price <= budget {
                gain += delta;
                budget -= price;
            } else {
                gain += delta * budget / price;
                break;
            }
        }
        gain
    }

    /// Every quanta vector within `budget` for the platforms from `pos` on,
    /// the last platform always taking as many as it can afford.
    fn search(&mut self, pos: usize, budget: f64, value: f64) -> Probe {
        self.nodes += 1;
        if self.nodes > NODE_BUDGET {
            return Probe::Unknown;
        }
        if value + self.relaxed_gain(pos, budget) < 1.0 - COVERAGE_TOL {
            return Probe::Short;
        }
        let p = &self.table[self.order[pos]];
        let most = if p.price > 0.0 {
            p.useful_quanta(self.makespan).min((budget / p.price + 1e-12).floor() as u64)
        } else {
            p.useful_quanta(self.makespan)
        };
        let i = self.order[pos];
        if pos + 1 == self.order.len() {
            if value + p.value(self.makespan, most) < 1.0 - COVERAGE_TOL {
                return Probe::Short;
            }
            self.chosen[i] = most;
            let mut outcome = self.check.probe(&self.chosen, self.makespan);
            if let (Probe::Covered, Some((limit, found))) = (outcome, self.collect.as_mut()) {
                found.push(self.chosen.clone());
                if found.len() < *limit {
                    outcome = Probe::Short;
                }
            }
            if outcome != Probe::Covered {
                self.chosen[i] = 0;
            }
            return outcome;
        }
        let mut unknown = false;
        for d in (0..=most).rev() {
            let gain = p.value(self.makespan, d);
            self.chosen[i] = d;
            match self.search(pos + 1, budget - d as f64 * p.price, value + gain) {
                Probe::Covered => return Probe::Covered,
                Probe::Unknown => unknown = true,
                Probe::Short => {}
            }
        }
        self.chosen[i] = 0;
        if unknown {
            Probe::Unknown
        } else {
            Probe::Short
        }
    }
}

fn probe(table: &[PlatformCoverage], check: &mut QuantaCheck, makespan: f64, cost_cap: Option<f64>) -> Probe {
    match cost_cap {
        None => {
            let total: f64 = table.iter().map(|p| p.covered(makespan)).sum();
            if total >= 1.0 - COVERAGE_TOL {
                Probe::Covered
            } else {
                Probe::Short
            }
        }
        Some(cap) => Knapsack::new(table, check, makespan).search(0, cap, 0.0),
    }
}

/// Lower bounds and candidate quanta vectors for one cluster and cap.
pub(crate) struct Coverage<'c> {
    table: Option<Vec<PlatformCoverage>>,
    check: QuantaCheck<'c>,
    cost_cap: Option<f64>,
}

impl<'c> Coverage<'c> {
    pub fn new(cluster: &'c ClusterModel, cost_cap: Option<f64>) -> Self {
        Coverage {
            table: coverage_table(cluster),
            check: QuantaCheck::new(cluster),
            cost_cap,
        }
    }

    /// Up to `limit` quanta vectors within the cap whose relaxations fit
    /// within `makespan`, those with the smallest relaxed makespan first.
    pub fn witnesses(&mut self, makespan: f64, limit: usize) -> Vec<Vec<u64>> {
        let (Some(table), Some(cap)) = (self.table.as_ref(), self.cost_cap) else {
            return Vec::new();
        };
        let mut k = Knapsack::new(table, &mut self.check, makespan);
        k.collect = Some((limit, Vec::new()));
        k.search(0, cap, 0.0);
        let mut found = k.collect.take().map(|(_, f)| f).unwrap_or_default();
        let known = &self.check.known;
        found.sort_by(|a, b| known[a].total_cmp(&known[b]));
        found
    }

    /// Largest makespan proven infeasible, searched below `upper`. Returns
    /// 0 when nothing can be proven.
    pub fn bound(&mut self, upper: f64) -> f64 {
        let Some(table) = self.table.as_ref() else {
            return 0.0;
        };
        if !(upper > 0.0 && upper.is_finite()) {
            return 0.0;
        }
        // `lo` is always proven short; `hi` is covered or unresolved.
        let (mut lo, mut hi) = (0.0, upper);
        for _ in 0..SEARCH_STEPS {
            let mid = 0.5 * (lo + hi);
            match probe(table, &mut self.check, mid, self.cost_cap) {
                Probe::Short => lo = mid,
                Probe::Covered | Probe::Unknown => hi = mid,
            }
            if hi - lo <= 1e-9 * hi {
                break;
            }
        }
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LatencyCoefficients, Matrix, Platform, Task, Workload};

    fn cluster(beta: Vec<Vec<f64>>, gamma: Vec<Vec<f64>>, work: Vec<u64>, quanta: Vec<(f64, f64)>) -> ClusterModel {
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

    fn coverage_bound(cluster: &ClusterModel, cost_cap: Option<f64>, upper: f64) -> f64 {
        Coverage::new(cluster, cost_cap).bound(upper)
    }

    #[test]
    fn identical_platforms_without_cap() {
        // Two platforms, each needing 10 s for all the work: at best 5 s.
        let c = cluster(vec![vec![1e-3], vec![1e-3]], vec![vec![0.0], vec![0.0]], vec![10_000], vec![(1.0, 1.0), (1.0, 1.0)]);
        let b = coverage_bound(&c, None, 100.0);
        assert!((b - 5.0).abs() < 1e-6, "{b}");
    }

    #[test]
    fn cap_limits_the_platform_count() {
        // Quanta of 100 s at price 1: a cap of 1 buys one platform.
        let c = cluster(vec![vec![1e-3], vec![1e-3]], vec![vec![0.0], vec![0.0]], vec![10_000], vec![(100.0, 1.0), (100.0, 1.0)]);
        let b = coverage_bound(&c, Some(1.0), 100.0);
        assert!((b - 10.0).abs() < 1e-6, "{b}");
        let b = coverage_bound(&c, Some(2.0), 100.0);
        assert!((b - 5.0).abs() < 1e-6, "{b}");
    }

    #[test]
    fn infeasible_cap_proves_the_upper_limit() {
        let c = cluster(vec![vec![1e-3]], vec![vec![0.0]], vec![10_000], vec![(100.0, 1.0)]);
        let b = coverage_bound(&c, Some(0.5), 1000.0);
        assert!(b > 999.0, "{b}");
    }
}
