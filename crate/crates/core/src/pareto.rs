//! Latency/cost trade-off curves.
//!
//! The MILP curve comes from the epsilon-constraint method: the cheapest
//! single-platform plan fixes the low cost bound `C_L`, the uncapped
//! latency optimum fixes the high bound `C_U`, and the program is solved at
//! evenly spaced caps in between. The heuristic curve comes from the
//! weighted sweep. Both are reduced to their non-dominated points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::json_digest;
use crate::exec::Execution;
use crate::heuristic::{cheapest_single_platform, inverse_makespan_split, weighted_sweep, HeuristicError, SweepWeight};
use crate::milp::{solve_partition, MilpError, PartitionSolve, SolveOptions, SolveStatus};
use crate::models::{ClusterModel, PartitionPlan};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParetoError {
    #[error("need at least 2 sweep points, got {0}")]
    TooFewPoints(usize),
    #[error("no sweep point produced a plan")]
    AllInfeasible,
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Milp,
    Heuristic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Milp => "milp",
            Method::Heuristic => "heuristic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub cost: f64,
    pub makespan_s: f64,
    pub plan: PartitionPlan,
    pub method: Method,
    /// Relative optimality gap reported for the plan; 0 for heuristics.
    pub solver_gap: f64,
}

impl ParetoPoint {
    pub fn new(plan: PartitionPlan, method: Method, solver_gap: f64) -> Self {
        ParetoPoint {
            cost: plan.total_cost,
            makespan_s: plan.makespan_s,
            plan,
            method,
            solver_gap,
        }
    }

    /// No worse in both objectives and better in one.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        dominates((self.cost, self.makespan_s), (other.cost, other.makespan_s))
    }
}

fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffCurve {
    /// Increasing cost, decreasing makespan.
    pub points: Vec<ParetoPoint>,
    /// Digest of the cluster the curve was computed for.
    pub cluster_digest: String,
}

impl TradeoffCurve {
    fn new(points: Vec<ParetoPoint>, cluster: &ClusterModel) -> Result<Self, ParetoError> {
        let points = pareto_filter(points);
        if points.is_empty() {
            return Err(ParetoError::AllInfeasible);
        }
        Ok(TradeoffCurve {
            points,
            cluster_digest: json_digest(cluster),
        })
    }
}

/// Indices of the non-dominated `(cost, makespan)` pairs in increasing cost
/// order. Of several identical pairs only the first is kept.
pub fn nondominated_indices(pairs: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    // Stable, so identical pairs keep their input order.
    order.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0).then(pairs[a].1.total_cmp(&pairs[b].1)));
    let mut kept = Vec::new();
    let mut best = f64::INFINITY;
    for k in order {
        if pairs[k].1 < best {
            best = pairs[k].1;
            kept.push(k);
        }
    }
    kept
}

/// Drops every weakly dominated point; the rest is sorted by cost.
pub fn pareto_filter(points: Vec<ParetoPoint>) -> Vec<ParetoPoint> {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.cost, p.makespan_s)).collect();
    let keep = nondominated_indices(&pairs);
    let mut slots: Vec<Option<ParetoPoint>> = points.into_iter().map(Some).collect();
    keep.into_iter().map(|k| slots[k].take().expect("index kept once")).collect()
}

/// True when no point of `points` dominates or duplicates another.
pub fn is_antichain(points: &[(f64, f64)]) -> bool {
    for (a, p) in points.iter().enumerate() {
        for (b, q) in points.iter().enumerate() {
            if a != b && p.0 <= q.0 && p.1 <= q.1 {
                return false;
            }
        }
    }
    true
}

/// `C_L` and `C_U` for `method`: the cheapest single-platform cost, and the
/// cost of the fastest plan the method produces.
pub fn cost_bounds(cluster: &ClusterModel, method: Method, options: &SolveOptions) -> Result<(f64, f64), ParetoError> {
    let low = cheapest_single_platform(cluster)?.total_cost;
    let high = match method {
        Method::Milp => uncapped(cluster, options)?.0.total_cost,
        Method::Heuristic => inverse_makespan_split(cluster)?.total_cost,
    };
    Ok((low, high))
}

fn uncapped(cluster: &ClusterModel, options: &SolveOptions) -> Result<(PartitionPlan, PartitionSolve), ParetoError> {
    let solve = solve_partition(cluster, None, options)?;
    match &solve.plan {
        Some(plan) => Ok((plan.clone(), solve)),
        None => Err(ParetoError::AllInfeasible),
    }
}

/// `count` caps evenly spaced from `low` to `high`.
pub fn cost_caps(low: f64, high: f64, count: usize) -> Vec<f64> {
    let high = high.max(low);
    (0..count)
        .map(|k| {
            if k + 1 == count {
                high
            } else {
                low + k as f64 * (high - low) / (count - 1) as f64
            }
        })
        .collect()
}

/// One solve of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub k: usize,
    pub cost_cap: f64,
    pub status: SolveStatus,
    /// Best proven lower bound on the makespan at this cap.
    pub bound: f64,
    pub nodes: u64,
    /// Index of the cap whose plan was adopted because it beat this cap's
    /// own solve; `None` when the solve's own plan is used.
    pub plan_from: Option<usize>,
    pub point: Option<ParetoPoint>,
}

/// Full record of an epsilon-constraint sweep. Entries keep caps without a
/// plan, which the curve leaves out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub cost_low: f64,
    pub cost_high: f64,
    pub entries: Vec<SweepEntry>,
    pub curve: TradeoffCurve,
}

impl SweepReport {
    /// Makespans in cap order, `None` where the solve found no plan.
    pub fn makespans(&self) -> Vec<Option<f64>> {
        self.entries.iter().map(|e| e.point.as_ref().map(|p| p.makespan_s)).collect()
    }
}

fn gap(makespan: f64, bound: f64) -> f64 {
    if makespan <= 0.0 {
        0.0
    } else {
        ((makespan - bound) / makespan).max(0.0)
    }
}

pub fn epsilon_sweep(cluster: &ClusterModel, point_count: usize, options: &SolveOptions) -> Result<TradeoffCurve, ParetoError> {
    Ok(epsilon_sweep_report(cluster, point_count, options, Execution::default())?.curve)
}

/// Solves the program at `point_count` caps from `C_L` to `C_U`, the caps
/// running concurrently under `exec`.
///
/// A plan found at a lower cap is feasible at every higher one, and a bound
/// proven at a higher cap holds at every lower one. After the solves both
/// are passed along the sweep, so the reported makespans never increase
/// with the cap and the gaps use the best bound known for each cap.
pub fn epsilon_sweep_report(
    cluster: &ClusterModel,
    point_count: usize,
    options: &SolveOptions,
    exec: Execution,
) -> Result<SweepReport, ParetoError> {
    if point_count < 2 {
        return Err(ParetoError::TooFewPoints(point_count));
    }
    options.validate()?;
    let low = cheapest_single_platform(cluster)?.total_cost;
    let (fastest, top) = uncapped(cluster, options)?;
    let caps = cost_caps(low, fastest.total_cost, point_count);

    // The uncapped plan is also the answer at any cap it fits under, with
    // the same proof.
    let solves: Vec<Result<PartitionSolve, MilpError>> = exec.map(&caps, |&cap| {
        if fastest.total_cost <= cap {
            Ok(top.clone())
        } else {
            solve_partition(cluster, Some(cap), options)
        }
    });
    let mut entries = Vec::with_capacity(point_count);
    for (k, solve) in solves.into_iter().enumerate() {
        let solve = solve?;
        entries.push(SweepEntry {
            k,
            cost_cap: caps[k],
            status: solve.solution.status,
            bound: solve.solution.bound,
            nodes: solve.solution.nodes_explored,
            plan_from: None,
            point: solve.plan.map(|plan| ParetoPoint::new(plan, Method::Milp, solve.solution.gap)),
        });
    }

    for k in (0..point_count.saturating_sub(1)).rev() {
        let above = entries[k + 1].bound;
        if above > entries[k].bound && entries[k].status != SolveStatus::Infeasible {
            entries[k].bound = above;
        }
    }
    let mut best: Option<(usize, ParetoPoint)> = None;
    for entry in entries.iter_mut() {
        let own = entry.point.as_ref().map(|p| p.makespan_s);
        match (&best, own) {
            (Some((from, carried)), own) if own.is_none_or(|m| carried.makespan_s < m) => {
                entry.point = Some(carried.clone());
                entry.plan_from = Some(*from);
            }
            (_, Some(_)) => best = entry.point.clone().map(|p| (entry.k, p)),
            _ => {}
        }
        if let Some(point) = entry.point.as_mut() {
            point.solver_gap = gap(point.makespan_s, entry.bound);
            if point.solver_gap <= options.relative_gap_tol {
                entry.status = SolveStatus::Optimal;
            } else {
                entry.status = SolveStatus::FeasibleGap;
            }
        }
    }

    let points = entries.iter().filter_map(|e| e.point.clone()).collect();
    Ok(SweepReport {
        cost_low: low,
        cost_high: fastest.total_cost,
        curve: TradeoffCurve::new(points, cluster)?,
        entries,
    })
}

/// Heuristic plans from the cheapest end to the fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeuristicSweep {
    /// One plan per weight, from weight 1 down to weight 0.
    pub plans: Vec<PartitionPlan>,
    pub curve: TradeoffCurve,
}

pub fn heuristic_sweep(cluster: &ClusterModel, point_count: usize) -> Result<TradeoffCurve, ParetoError> {
    Ok(heuristic_sweep_report(cluster, point_count)?.curve)
}

/// The weighted sweep at `point_count` evenly spaced weights together with
/// the two bound plans.
pub fn heuristic_sweep_report(cluster: &ClusterModel, point_count: usize) -> Result<HeuristicSweep, ParetoError> {
    if point_count < 2 {
        return Err(ParetoError::TooFewPoints(point_count));
    }
    let mut weights = SweepWeight::evenly_spaced(point_count);
    weights.reverse();
    let plans = weighted_sweep(cluster, &weights)?;
    let mut points: Vec<ParetoPoint> = plans.iter().map(|p| ParetoPoint::new(p.clone(), Method::Heuristic, 0.0)).collect();
    points.push(ParetoPoint::new(cheapest_single_platform(cluster)?, Method::Heuristic, 0.0));
    points.push(ParetoPoint::new(inverse_makespan_split(cluster)?, Method::Heuristic, 0.0));
    Ok(HeuristicSweep {
        plans,
        curve: TradeoffCurve::new(points, cluster)?,
    })
}

/// The MILP solved at the cost of one heuristic point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapMatch {
    pub cost_cap: f64,
    pub heuristic_makespan_s: f64,
    pub status: SolveStatus,
    pub milp_cost: Option<f64>,
    pub milp_makespan_s: Option<f64>,
    pub milp_gap: f64,
}

impl CapMatch {
    /// The MILP plan is at least as fast as the heuristic one, up to its
    /// reported gap.
    pub fn milp_no_worse(&self) -> bool {
        match self.milp_makespan_s {
            Some(m) => m <= self.heuristic_makespan_s + self.milp_gap * m + 1e-6,
            None => false,
        }
    }
}

/// Solves the program at the cost of every point of `heuristic`.
pub fn cap_matched(cluster: &ClusterModel, heuristic: &TradeoffCurve, options: &SolveOptions, exec: Execution) -> Result<Vec<CapMatch>, ParetoError> {
    let targets: Vec<(f64, f64)> = heuristic.points.iter().map(|p| (p.cost, p.makespan_s)).collect();
    exec.map(&targets, |&(cap, makespan)| {
        let solve = solve_partition(cluster, Some(cap), options)?;
        Ok(CapMatch {
            cost_cap: cap,
            heuristic_makespan_s: makespan,
            status: solve.solution.status,
            milp_cost: solve.plan.as_ref().map(|p| p.total_cost),
            milp_makespan_s: solve.plan.as_ref().map(|p| p.makespan_s),
            milp_gap: solve.solution.gap,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostLevel {
    Cheapest,
    Median,
    Fastest,
}

impl CostLevel {
    pub fn name(self) -> &'static str {
        match self {
            CostLevel::Cheapest => "cheapest",
            CostLevel::Median => "median",
            CostLevel::Fastest => "fastest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub level: CostLevel,
    pub heuristic_cost: f64,
    pub heuristic_makespan_s: f64,
    pub milp_cost: f64,
    pub milp_makespan_s: f64,
    /// Heuristic over MILP.
    pub cost_ratio: f64,
    pub latency_ratio: f64,
    pub milp_gap: f64,
}

impl ComparisonRow {
    fn new(level: CostLevel, heuristic: &PartitionPlan, milp: &PartitionPlan, milp_gap: f64) -> Self {
        let ratio = |a: f64, b: f64| if a == b { 1.0 } else { a / b };
        ComparisonRow {
            level,
            heuristic_cost: heuristic.total_cost,
            heuristic_makespan_s: heuristic.makespan_s,
            milp_cost: milp.total_cost,
            milp_makespan_s: milp.makespan_s,
            cost_ratio: ratio(heuristic.total_cost, milp.total_cost),
            latency_ratio: ratio(heuristic.makespan_s, milp.makespan_s),
            milp_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub point_count: usize,
    pub rows: Vec<ComparisonRow>,
    pub cluster_digest: String,
    pub milp: SweepReport,
    pub heuristic: HeuristicSweep,
}

impl Comparison {
    pub fn row(&self, level: CostLevel) -> &ComparisonRow {
        self.rows.iter().find(|r| r.level == level).expect("all levels present")
    }
}

/// Index of the median sweep point.
pub fn median_index(point_count: usize) -> usize {
    (point_count - 1) / 2
}

/// Both methods at three cost levels. The cheapest row is the shared `C_L`
/// plan. The median row takes the middle point of each method's sweep:
/// cap index `(K - 1) / 2` for the MILP and the weight at the same position
/// counted from the cheapest end for the heuristic. The fastest row pairs
/// the last MILP cap with the last heuristic weight.
pub fn compare(cluster: &ClusterModel, point_count: usize, options: &SolveOptions, exec: Execution) -> Result<Comparison, ParetoError> {
    let milp = epsilon_sweep_report(cluster, point_count, options, exec)?;
    let heuristic = heuristic_sweep_report(cluster, point_count)?;
    let cheapest = cheapest_single_platform(cluster)?;
    let mid = median_index(point_count);
    let milp_point = |k: usize| milp.entries[k].point.as_ref().ok_or(ParetoError::AllInfeasible);
    let median = milp_point(mid)?;
    let fastest = milp_point(point_count - 1)?;
    let rows = vec![
        ComparisonRow::new(CostLevel::Cheapest, &cheapest, &cheapest, 0.0),
        ComparisonRow::new(CostLevel::Median, &heuristic.plans[mid], &median.plan, median.solver_gap),
        ComparisonRow::new(CostLevel::Fastest, &heuristic.plans[point_count - 1], &fastest.plan, fastest.solver_gap),
    ];
    Ok(Comparison {
        point_count,
        rows,
        cluster_digest: json_digest(cluster),
        milp,
        heuristic,
    })
}
