//! Mixed integer linear programming: the cost-capped makespan program, an
//! LP-relaxation simplex and a branch-and-bound driver.

mod branch;
mod coverage;
mod partition;
mod program;
mod rounding;
mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use branch::{solve_milp, solve_milp_with, Rounding, SearchAids};
pub use partition::{build_milp, extract_plan, plan_values, solve_partition, PartitionSolve, PartitionVars};
pub use program::{ConstraintSense, Integrality, LinearConstraint, MixedIntegerProgram, VarId, VariableSpec};

use simplex::{LpModel, LpStatus, Simplex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("cost cap must be nonnegative and finite, got {0}")]
    InvalidCostCap(f64),
    #[error("invalid solve options: {0}")]
    InvalidOptions(String),
    #[error("solution has no usable values (status {0:?})")]
    NoSolution(SolveStatus),
    #[error("solution does not match the cluster: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub integrality_tol: f64,
    pub relative_gap_tol: f64,
    /// Wall-clock budget. Runs that hit it are not reproducible; the node
    /// limit is the deterministic alternative.
    pub time_limit_s: f64,
    pub node_limit: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            integrality_tol: 1e-6,
            relative_gap_tol: 1e-4,
            time_limit_s: 60.0,
            node_limit: 100_000,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), MilpError> {
        let ok = |v: f64| v > 0.0 && !v.is_nan();
        if !ok(self.integrality_tol) || !ok(self.relative_gap_tol) || !ok(self.time_limit_s) || self.node_limit == 0 {
            return Err(MilpError::InvalidOptions(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// A limit stopped the search with an incumbent in hand.
    FeasibleGap,
    Infeasible,
    Unbounded,
    /// A limit stopped the search before any incumbent was found.
    LimitHit,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleGap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    /// Indexed like [`MixedIntegerProgram::variables`].
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub status: SolveStatus,
    /// Relative distance between the incumbent and the best proven bound.
    pub gap: f64,
    /// Best proven lower bound on the objective.
    pub bound: f64,
    pub nodes_explored: u64,
    pub lp_iterations: u64,
}

impl MilpSolution {
    fn without_values(status: SolveStatus, nodes: u64, iterations: u64) -> Self {
        MilpSolution {
            values: Vec::new(),
            objective_value: f64::NAN,
            status,
            gap: f64::INFINITY,
            bound: f64::NEG_INFINITY,
            nodes_explored: nodes,
            lp_iterations: iterations,
        }
    }
}

fn lp_iteration_cap(model: &LpModel) -> usize {
    50 * (model.n + model.m) + 10_000
}

/// Solves the program with integrality dropped.
pub fn solve_lp_relaxation(program: &MixedIntegerProgram) -> Result<MilpSolution, MilpError> {
    program.validate()?;
    let model = LpModel::from_program(program);
    let mut lp = Simplex::new(&model);
    let cap = lp_iteration_cap(&model);
    let mut status = lp.solve(cap);
    if status == LpStatus::Optimal {
        status = lp.polish(cap);
    }
    let iterations = lp.iterations as u64;
    Ok(match status {
        LpStatus::Optimal => {
            let objective_value = lp.objective();
            MilpSolution {
                values: lp.values().to_vec(),
                objective_value,
                status: SolveStatus::Optimal,
                gap: 0.0,
                bound: objective_value,
                nodes_explored: 0,
                lp_iterations: iterations,
            }
        }
        LpStatus::Infeasible => MilpSolution::without_values(SolveStatus::Infeasible, 0, iterations),
        LpStatus::Unbounded => MilpSolution::without_values(SolveStatus::Unbounded, 0, iterations),
        LpStatus::IterationLimit => MilpSolution::without_values(SolveStatus::LimitHit, 0, iterations),
    })
}
