//! Primal heuristics for the partitioning program.
//!
//! A billed plan is pinned down by how many quanta each platform buys and
//! which (platform, task) pairs carry work. Given both, the best shares
//! come from a small linear program. Candidate quanta vectors are taken
//! from node relaxations; candidate supports come from the relaxation
//! itself or from a first solve in which setup time is charged in
//! proportion to the share.

use std::cell::RefCell;
use std::collections::HashSet;

use super::program::{ConstraintSense, LinearConstraint, MixedIntegerProgram, VarId, VariableSpec};
use super::partition::PartitionVars;
use super::solve_lp_relaxation;
use crate::models::{plan_from_allocation, AllocationMatrix, ClusterModel, Matrix, PartitionPlan};

/// Shares solving the makespan program restricted to the `support` pairs.
/// With `quanta`, each platform's latency must fit into that many quanta.
/// With `prorated`, setup time is charged in proportion to the share, which
/// relaxes the program. Returns the optimal makespan and the shares.
fn share_lp(cluster: &ClusterModel, support: &[Vec<bool>], quanta: Option<&[u64]>, prorated: bool) -> Option<(f64, Matrix)> {
    let (mu, tau) = (cluster.platform_count(), cluster.task_count());
    let mut p = MixedIntegerProgram::new();
    let mut ids = vec![vec![None; tau]; mu];
    for i in 0..mu {
        for j in 0..tau {
            if support[i][j] {
                ids[i][j] = Some(p.add_variable(VariableSpec::continuous(format!("a_{i}_{j}"), 0.0, 1.0)).ok()?);
            }
        }
    }
    let f = p.add_variable(VariableSpec::continuous("f", 0.0, f64::INFINITY)).ok()?;
    for j in 0..tau {
        let terms: Vec<(VarId, f64)> = (0..mu).filter_map(|i| ids[i][j].map(|v| (v, 1.0))).collect();
        if terms.is_empty() {
            return None;
        }
        p.add_constraint(LinearConstraint::new(format!("t{j}"), terms, ConstraintSense::Eq, 1.0)).ok()?;
    }
    for i in 0..mu {
        let per_share = |j: usize| cluster.proportional_latency(i, j) + if prorated { cluster.gamma(i, j) } else { 0.0 };
        let terms: Vec<(VarId, f64)> = (0..tau).filter_map(|j| ids[i][j].map(|v| (v, per_share(j)))).collect();
        if terms.is_empty() {
            continue;
        }
        let setup: f64 = if prorated {
            0.0
        } else {
            (0..tau).filter(|&j| support[i][j]).map(|j| cluster.gamma(i, j)).sum()
        };
        let with_f = terms.iter().copied().chain([(f, -1.0)]);
        p.add_constraint(LinearConstraint::new(format!("m{i}"), with_f, ConstraintSense::Le, -setup)).ok()?;
        if let Some(q) = quanta {
            let room = cluster.platforms()[i].quantum_s * q[i] as f64 - setup;
            p.add_constraint(LinearConstraint::new(format!("q{i}"), terms, ConstraintSense::Le, room)).ok()?;
        }
    }
    p.set_objective([(f, 1.0)]).ok()?;
    let solved = solve_lp_relaxation(&p).ok()?;
    if !solved.status.has_solution() {
        return None;
    }
    let raw = Matrix::from_fn(mu, tau, |i, j| ids[i][j].map_or(0.0, |v| solved.values[v]));
    Some((solved.objective_value, raw))
}

/// Best plan that uses only the `support` pairs; see [`share_lp`].
pub(crate) fn rebalance(cluster: &ClusterModel, support: &[Vec<bool>], quanta: Option<&[u64]>, prorated: bool) -> Option<PartitionPlan> {
    let (_, raw) = share_lp(cluster, support, quanta, prorated)?;
    let allocation = AllocationMatrix::snapped(&raw).ok()?;
    plan_from_allocation(cluster, &allocation).ok()
}

fn full_support(cluster: &ClusterModel, quanta: &[u64]) -> Vec<Vec<bool>> {
    quanta.iter().map(|&q| vec![q > 0; cluster.task_count()]).collect()
}

/// Lower bound on the makespan of any plan buying at most `quanta`, from
/// the program with setup time charged per share. Infinite when no such
/// plan exists.
pub(crate) fn quanta_makespan_bound(cluster: &ClusterModel, quanta: &[u64]) -> f64 {
    if quanta.iter().all(|&q| q == 0) {
        return f64::INFINITY;
    }
    share_lp(cluster, &full_support(cluster, quanta), Some(quanta), true).map_or(f64::INFINITY, |(f, _)| f)
}

fn support_of(plan: &PartitionPlan) -> Vec<Vec<bool>> {
    plan.support.iter().map(|r| r.iter().map(|&b| b == 1).collect()).collect()
}

/// Best plan buying exactly `quanta` (at most, once billed): a prorated
/// solve over every task of every platform that buys time picks the
/// support, then the shares are rebalanced with full setup charges.
pub(crate) fn plan_for_quanta(cluster: &ClusterModel, quanta: &[u64]) -> Option<PartitionPlan> {
    let relaxed = rebalance(cluster, &full_support(cluster, quanta), Some(quanta), true)?;
    rebalance(cluster, &support_of(&relaxed), Some(quanta), false)
}

fn faster(a: PartitionPlan, b: PartitionPlan) -> PartitionPlan {
    if b.makespan_s.total_cmp(&a.makespan_s).then(b.total_cost.total_cmp(&a.total_cost)).is_lt() {
        b
    } else {
        a
    }
}

/// Rounds node relaxations into billed plans, remembering which quanta
/// vectors it has already tried.
pub(crate) struct Rounder<'c> {
    cluster: &'c ClusterModel,
    cost_cap: Option<f64>,
    tried: RefCell<HashSet<Vec<u64>>>,
}

impl<'c> Rounder<'c> {
    pub fn new(cluster: &'c ClusterModel, cost_cap: Option<f64>) -> Self {
        Rounder {
            cluster,
            cost_cap,
            tried: RefCell::new(HashSet::new()),
        }
    }

    fn within_cap(&self, plan: &PartitionPlan) -> bool {
        self.cost_cap.is_none_or(|cap| plan.total_cost <= cap)
    }

    /// [`plan_for_quanta`] for a vector not tried before.
    pub fn try_quanta(&self, quanta: Vec<u64>) -> Option<PartitionPlan> {
        if quanta.iter().all(|&q| q == 0) || !self.tried.borrow_mut().insert(quanta.clone()) {
            return None;
        }
        plan_for_quanta(self.cluster, &quanta).filter(|p| self.within_cap(p))
    }

    /// Fastest plan within the cap among: the snapped relaxation with its
    /// shares rebalanced, and plans for several roundings of the relaxed
    /// quanta.
    pub fn round(&self, relaxed: &[f64]) -> Option<PartitionPlan> {
        let cluster = self.cluster;
        let (mu, tau) = (cluster.platform_count(), cluster.task_count());
        let layout = PartitionVars::new(mu, tau);
        let raw = Matrix::from_fn(mu, tau, |i, j| relaxed[layout.allocation(i, j)]);
        let mut best: Option<PartitionPlan> = None;
        let mut consider = |plan: Option<PartitionPlan>| {
            if let Some(plan) = plan.filter(|p| self.within_cap(p)) {
                best = Some(match best.take() {
                    Some(b) => faster(b, plan),
                    None => plan,
                });
            }
        };

        if let Ok(snapped) = AllocationMatrix::snapped(&raw).and_then(|a| plan_from_allocation(cluster, &a)) {
            if self.within_cap(&snapped) {
                let quanta = self.cost_cap.map(|_| snapped.billed_quanta.clone());
                consider(rebalance(cluster, &support_of(&snapped), quanta.as_deref(), false));
                consider(Some(snapped));
            }
        }
        let Some(cap) = self.cost_cap else {
            return best;
        };
        for quanta in quanta_roundings(cluster, &(0..mu).map(|i| relaxed[layout.quanta(i)]).collect::<Vec<_>>(), cap) {
            consider(self.try_quanta(quanta));
        }
        best
    }
}

/// Integer quanta vectors within `cap` near the relaxed ones: thresholded
/// rounding, rounding down and spending the remaining budget on the largest
/// fractions, and rounding up and giving back the quanta that buy the
/// least work per unit of price.
fn quanta_roundings(cluster: &ClusterModel, relaxed: &[f64], cap: f64) -> Vec<Vec<u64>> {
    let mu = relaxed.len();
    let price = |i: usize| cluster.platforms()[i].price_per_quantum;
    let cost = |q: &[u64]| (0..mu).map(|i| q[i] as f64 * price(i)).sum::<f64>();
    let mut out: Vec<Vec<u64>> = [0.25, 0.5, 0.75]
        .iter()
        .map(|t| relaxed.iter().map(|d| (d - t).ceil().max(0.0) as u64).collect())
        .collect();

    let mut filled: Vec<u64> = relaxed.iter().map(|d| (d + 1e-6).floor().max(0.0) as u64).collect();
    let mut budget = cap - cost(&filled);
    let mut order: Vec<usize> = (0..mu).collect();
    let frac = |i: usize, q: &[u64]| relaxed[i] - q[i] as f64;
    order.sort_by(|&a, &b| frac(b, &filled).total_cmp(&frac(a, &filled)).then(a.cmp(&b)));
    for &i in &order {
        if frac(i, &filled) > 1e-6 && price(i) <= budget {
            filled[i] += 1;
            budget -= price(i);
        }
    }
    out.push(filled);

    let mut trimmed: Vec<u64> = relaxed.iter().map(|d| (d - 1e-6).ceil().max(0.0) as u64).collect();
    let mut used: Vec<f64> = (0..mu).map(|i| relaxed[i] - (trimmed[i] as f64 - 1.0)).collect();
    let mut total = cost(&trimmed);
    while total > cap {
        let value = |i: usize| used[i] * cluster.platforms()[i].quantum_s / cluster.full_workload_latency(i) / price(i);
        let Some(i) = (0..mu).filter(|&i| trimmed[i] > 0).min_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b))) else {
            break;
        };
        trimmed[i] -= 1;
        used[i] = 1.0;
        total -= price(i);
    }
    out.push(trimmed);

    let mut seen = HashSet::new();
    out.retain(|q| cost(q) <= cap && seen.insert(q.clone()));
    out
}
