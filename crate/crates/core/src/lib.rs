//! # hetpart
//!
//! Partitioning of divisible, independent tasks across heterogeneous platforms
//! that are rented by the time quantum.
//!
//! Every platform `i` runs a share `A[i][j]` of task `j` with a linear latency
//! model `beta * work + gamma`, where the constant `gamma` is paid once per
//! (platform, task) pair that carries any work. Platforms bill
//! `ceil(latency / quantum) * price` each. The library finds allocations that
//! trade the workload makespan (slowest platform) against the total bill:
//!
//!  1. [`milp`] encodes the cost-capped makespan problem as a mixed integer
//!     linear program and solves it with an in-crate simplex and
//!     branch-and-bound.
//!  2. [`heuristic`] provides the simple baseline partitioners.
//!  3. [`pareto`] sweeps a cost cap between the cheapest and fastest plans
//!     and keeps the non-dominated points.
//!  4. [`sim`] replays a plan against perturbed coefficients.
//!  5. [`benchmark`] fits latency models from timing samples and provides a
//!     Monte Carlo option pricer as a realistic divisible workload.
//!
//! ## Example
//! ```rust
//! use hetpart::models::{ClusterModel, LatencyCoefficients, Matrix, Platform, Task, Workload};
//! use hetpart::milp::{build_milp, extract_plan, solve_milp, SolveOptions};
//!
//! let cluster = ClusterModel::new(
//!     vec![Platform::new("a", 1.0, 1.0).unwrap(), Platform::new("b", 1.0, 1.0).unwrap()],
//!     Workload::new(vec![Task::new("t0", 10_000)]).unwrap(),
//!     LatencyCoefficients::new(
//!         Matrix::from_rows(vec![vec![1e-3], vec![1e-3]]).unwrap(),
//!         Matrix::zeros(2, 1),
//!     )
//!     .unwrap(),
//! )
//! .unwrap();
//!
//! let program = build_milp(&cluster, None).unwrap();
//! let solution = solve_milp(&program, &SolveOptions::default()).unwrap();
//! let plan = extract_plan(&solution, &cluster).unwrap();
//! assert!((plan.makespan_s - 5.0).abs() < 1e-6);
//! ```

pub mod benchmark;
pub mod digest;
pub mod exec;
pub mod heuristic;
pub mod milp;
pub mod models;
pub mod pareto;
pub mod rng;
pub mod sim;
pub mod synth;

pub use exec::Execution;
pub use models::{AllocationMatrix, ClusterModel, PartitionPlan, Platform};
