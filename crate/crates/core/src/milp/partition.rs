use std::time::Instant;

use super::branch::{solve_milp_with, SearchAids};
use super::coverage::Coverage;
use super::rounding::Rounder;
use super::program::{ConstraintSense, LinearConstraint, MixedIntegerProgram, VarId, VariableSpec};
use super::{MilpError, MilpSolution, SolveOptions};
use crate::heuristic::cheapest_single_platform;
use crate::models::{plan_from_allocation, AllocationMatrix, ClusterModel, Matrix, PartitionPlan};

/// Column positions of the partitioning variables. Allocation and support
/// variables are platform-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionVars {
    pub platforms: usize,
    pub tasks: usize,
}

impl PartitionVars {
    pub fn new(platforms: usize, tasks: usize) -> Self {
        PartitionVars { platforms, tasks }
    }

    pub fn allocation(&self, i: usize, j: usize) -> VarId {
        i * self.tasks + j
    }

    pub fn support(&self, i: usize, j: usize) -> VarId {
        self.platforms * self.tasks + i * self.tasks + j
    }

    pub fn quanta(&self, i: usize) -> VarId {
        2 * self.platforms * self.tasks + i
    }

    pub fn makespan(&self) -> VarId {
        2 * self.platforms * self.tasks + self.platforms
    }

    pub fn count(&self) -> usize {
        self.makespan() + 1
    }
}

/// Builds the makespan-minimizing program, optionally with a cap on the
/// total bill.
pub fn build_milp(cluster: &ClusterModel, cost_cap: Option<f64>) -> Result<MixedIntegerProgram, MilpError> {
    if let Some(cap) = cost_cap {
        if !(cap >= 0.0 && cap.is_finite()) {
            return Err(MilpError::InvalidCostCap(cap));
        }
    }
    let (mu, tau) = (cluster.platform_count(), cluster.task_count());
    let layout = PartitionVars::new(mu, tau);
    let mut p = MixedIntegerProgram::new();

    for i in 0..mu {
        for j in 0..tau {
            p.add_variable(VariableSpec::continuous(format!("A_{i}_{j}"), 0.0, 1.0))?;
        }
    }
    for i in 0..mu {
        for j in 0..tau {
            p.add_variable(VariableSpec::binary(format!("B_{i}_{j}")))?;
        }
    }
    let full: Vec<f64> = (0..mu).map(|i| cluster.full_workload_latency(i)).collect();
    for (i, platform) in cluster.platforms().iter().enumerate() {
        let d_max = (full[i] / platform.quantum_s).ceil();
        p.add_variable(VariableSpec::integer(format!("D_{i}"), 0.0, d_max))?;
    }
    let f_max = full.iter().copied().fold(0.0, f64::max);
    p.add_variable(VariableSpec::continuous("F_L", 0.0, f_max))?;

    for j in 0..tau {
        p.add_constraint(LinearConstraint::new(
            format!("assign_{j}"),
            (0..mu).map(|i| (layout.allocation(i, j), 1.0)),
            ConstraintSense::Eq,
            1.0,
        ))?;
    }
    let latency_terms = |i: usize| {
        (0..tau).flat_map(move |j| {
            [
                (layout.allocation(i, j), cluster.beta(i, j) * cluster.workload().work(j)),
                (layout.support(i, j), cluster.gamma(i, j)),
            ]
        })
    };
    for i in 0..mu {
        p.add_constraint(LinearConstraint::new(
            format!("makespan_{i}"),
            latency_terms(i).chain([(layout.makespan(), -1.0)]),
            ConstraintSense::Le,
            0.0,
        ))?;
    }
    for i in 0..mu {
        for j in 0..tau {
            p.add_constraint(LinearConstraint::new(
                format!("support_{i}_{j}"),
                [(layout.allocation(i, j), 1.0), (layout.support(i, j), -1.0)],
                ConstraintSense::Le,
                0.0,
            ))?;
        }
    }
    for (i, platform) in cluster.platforms().iter().enumerate() {
        p.add_constraint(LinearConstraint::new(
            format!("quanta_{i}"),
            latency_terms(i).chain([(layout.quanta(i), -platform.quantum_s)]),
            ConstraintSense::Le,
            0.0,
        ))?;
    }
    if let Some(cap) = cost_cap {
        p.add_constraint(LinearConstraint::new(
            "cost_cap",
            cluster.platforms().iter().enumerate().map(|(i, pl)| (layout.quanta(i), pl.price_per_quantum)),
            ConstraintSense::Le,
            cap,
        ))?;
    }
    p.set_objective([(layout.makespan(), 1.0)])?;
    Ok(p)
}

/// Rebuilds a plan from the allocation values of a solved program.
pub fn extract_plan(solution: &MilpSolution, cluster: &ClusterModel) -> Result<PartitionPlan, MilpError> {
    if !solution.status.has_solution() {
        return Err(MilpError::NoSolution(solution.status));
    }
    let layout = PartitionVars::new(cluster.platform_count(), cluster.task_count());
    if solution.values.len() < layout.count() {
        return Err(MilpError::ShapeMismatch(format!(
            "{} values for a {}x{} cluster",
            solution.values.len(),
            layout.platforms,
            layout.tasks
        )));
    }
    let raw = Matrix::from_fn(layout.platforms, layout.tasks, |i, j| solution.values[layout.allocation(i, j)]);
    let allocation = AllocationMatrix::snapped(&raw)?;
    Ok(plan_from_allocation(cluster, &allocation)?)
}

/// Program values that reproduce `plan`: its allocation and support, enough
/// quanta to cover each platform's latency, and its makespan.
pub fn plan_values(plan: &PartitionPlan, cluster: &ClusterModel) -> Vec<f64> {
    let layout = PartitionVars::new(cluster.platform_count(), cluster.task_count());
    let mut values = vec![0.0; layout.count()];
    for i in 0..layout.platforms {
        for j in 0..layout.tasks {
            values[layout.allocation(i, j)] = plan.allocation.get(i, j);
            values[layout.support(i, j)] = f64::from(plan.support[i][j]);
        }
        let quantum = cluster.platforms()[i].quantum_s;
        let mut quanta = plan.billed_quanta[i] as f64;
        // Billing forgives round-off that the quanta row does not.
        if plan.platform_latency_s[i] > quantum * quanta + 1e-7 {
            quanta += 1.0;
        }
        values[layout.quanta(i)] = quanta;
    }
    values[layout.makespan()] = plan.makespan_s;
    values
}

/// Outcome of [`solve_partition`].
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSolve {
    pub solution: MilpSolution,
    /// Present when the solver returned an incumbent.
    pub plan: Option<PartitionPlan>,
}

/// Builds and solves the program for `cost_cap`, then extracts the plan.
///
/// Before the search, a combinatorial bound is computed and the quanta
/// vectors that witness it near its value are turned into plans; the best
/// of those and the cheapest single-platform plan starts the search. Node
/// relaxations are rounded into billed plans as the search goes.
pub fn solve_partition(cluster: &ClusterModel, cost_cap: Option<f64>, options: &SolveOptions) -> Result<PartitionSolve, MilpError> {
    let started = Instant::now();
    let program = build_milp(cluster, cost_cap)?;
    let rounder = Rounder::new(cluster, cost_cap);
    let cheapest = cheapest_single_platform(cluster).map_err(|e| MilpError::InvalidProgram(e.to_string()))?;
    let mut start = cost_cap.is_none_or(|cap| cheapest.total_cost <= cap).then_some(cheapest);
    let upper = match &start {
        Some(plan) => plan.makespan_s,
        None => (0..cluster.platform_count()).map(|i| cluster.full_workload_latency(i)).fold(0.0, f64::max),
    };
    let mut coverage = Coverage::new(cluster, cost_cap);
    let bound = coverage.bound(upper);
    for slack in WITNESS_SLACK {
        let target = bound * (1.0 + slack);
        if cost_cap.is_none() || target >= start.as_ref().map_or(f64::INFINITY, |p| p.makespan_s) {
            break;
        }
        for quanta in coverage.witnesses(target, WITNESS_COUNT) {
            if let Some(plan) = rounder.try_quanta(quanta) {
                if start.as_ref().is_none_or(|s| plan.makespan_s < s.makespan_s) {
                    start = Some(plan);
                }
            }
        }
    }
    let start_values = start.as_ref().map(|plan| plan_values(plan, cluster));
    let round = |relaxed: &[f64]| rounder.round(relaxed).map(|plan| plan_values(&plan, cluster));
    let aids = SearchAids {
        start: start_values.as_deref(),
        rounding: Some(&round),
        bound: Some(bound),
    };
    // The preparation counts against the time limit.
    let search_options = SolveOptions {
        time_limit_s: (options.time_limit_s - started.elapsed().as_secs_f64()).max(MIN_SEARCH_S),
        ..*options
    };
    let solution = solve_milp_with(&program, &search_options, aids)?;
    let plan = if solution.status.has_solution() {
        Some(extract_plan(&solution, cluster)?)
    } else {
        None
    };
    Ok(PartitionSolve { solution, plan })
}

/// Relative distances above the coverage bound at which witness quanta
/// vectors are tried as starting plans.
const WITNESS_SLACK: [f64; 7] = [0.0, 0.01, 0.03, 0.06, 0.1, 0.2, 0.35];
/// Witness vectors tried per slack.
const WITNESS_COUNT: usize = 16;
/// Search time left when the preparation used up the whole limit, enough
/// to solve the root relaxation.
const MIN_SEARCH_S: f64 = 1e-3;
