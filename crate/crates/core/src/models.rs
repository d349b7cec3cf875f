//! Latency, cost and rate models plus the cluster and plan types shared by
//! every other module.
//!
//! All matrices are stored platform-major: row `i` is a platform, column `j`
//! is a task.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allocation shares at or below this are treated as "no work on this
/// platform", so the setup overhead is not charged for round-off.
pub const ALLOCATION_EPSILON: f64 = 1e-6;

/// Tolerance on the per-task column sum of an allocation.
pub const COLUMN_SUM_TOLERANCE: f64 = 1e-9;

/// Latencies that exceed a whole number of quanta by less than this fraction
/// of a quantum are billed as that whole number. Keeps solver round-off on a
/// tight capacity row from adding a phantom quantum.
pub const BILLING_SLACK: f64 = 1e-9;

const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid latency coefficient: beta={beta}, gamma={gamma}")]
    InvalidCoefficient { beta: f64, gamma: f64 },
    #[error("relative device performance must be positive, got {0}")]
    InvalidRdp(f64),
    #[error("billing period must be positive, got {0}")]
    InvalidPeriod(f64),
    #[error("time quantum must be positive, got {0}")]
    InvalidQuantum(f64),
    #[error("invalid rate input: {0}")]
    InvalidRateInput(String),
    #[error("invalid platform `{id}`: {reason}")]
    InvalidPlatform { id: String, reason: String },
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("allocation entry ({platform}, {task}) = {value} outside [0, 1]")]
    EntryOutOfRange {
        platform: usize,
        task: usize,
        value: f64,
    },
    #[error("allocation column {task} sums to {sum}, expected 1")]
    ColumnSumViolation { task: usize, sum: f64 },
    #[error("matrix rows have inconsistent lengths")]
    RaggedMatrix,
}

/// Dense row-major matrix. Serialized as an array of row arrays.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(ModelError::RaggedMatrix);
        }
        let n = rows.len();
        Ok(Matrix {
            rows: n,
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.get(i, j))
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries((0..self.rows).map(|i| self.row(i)))
            .finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = ModelError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Matrix::from_rows(rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    /// Work units, e.g. Monte Carlo paths.
    pub work: u64,
}

impl Task {
    pub fn new(id: impl Into<String>, work: u64) -> Self {
        Task {
            id: id.into(),
            work,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Workload {
    tasks: Vec<Task>,
}

impl Workload {
    pub fn new(tasks: Vec<Task>) -> Result<Self, ModelError> {
        if tasks.is_empty() {
            return Err(ModelError::InvalidWorkload("workload has no tasks".into()));
        }
        let mut seen = HashSet::new();
        for t in &tasks {
            if !seen.insert(t.id.as_str()) {
                return Err(ModelError::InvalidWorkload(format!(
                    "duplicate task id `{}`",
                    t.id
                )));
            }
        }
        Ok(Workload { tasks })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn work(&self, j: usize) -> f64 {
        self.tasks[j].work as f64
    }
}

/// A rentable platform. `price_per_quantum` is the charge for one quantum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Platform {
    pub id: String,
    pub quantum_s: f64,
    pub price_per_quantum: f64,
}

impl Platform {
    pub fn new(id: impl Into<String>, quantum_s: f64, price_per_quantum: f64) -> Result<Self, ModelError> {
        let id = id.into();
        if !(quantum_s > 0.0) || !quantum_s.is_finite() {
            return Err(ModelError::InvalidPlatform {
                id,
                reason: format!("quantum_s must be positive, got {quantum_s}"),
            });
        }
        if !(price_per_quantum >= 0.0) || !price_per_quantum.is_finite() {
            return Err(ModelError::InvalidPlatform {
                id,
                reason: format!("price must be nonnegative, got {price_per_quantum}"),
            });
        }
        Ok(Platform {
            id,
            quantum_s,
            price_per_quantum,
        })
    }

    /// Builds a platform from an hourly list price, converting to the price
    /// of one quantum.
    pub fn from_hourly_rate(id: impl Into<String>, quantum_s: f64, price_per_hour: f64) -> Result<Self, ModelError> {
        Platform::new(id, quantum_s, price_per_hour * quantum_s / SECONDS_PER_HOUR)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyCoefficients {
    /// Seconds per work unit.
    beta: Matrix,
    /// Setup seconds, charged once per supported (platform, task) pair.
    gamma: Matrix,
}

impl LatencyCoefficients {
    pub fn new(beta: Matrix, gamma: Matrix) -> Result<Self, ModelError> {
        if beta.shape() != gamma.shape() {
            return Err(ModelError::DimensionMismatch {
                expected: beta.shape(),
                found: gamma.shape(),
            });
        }
        for (&b, &g) in beta.values().iter().zip(gamma.values()) {
            if !(b > 0.0) || !(g >= 0.0) || !b.is_finite() || !g.is_finite() {
                return Err(ModelError::InvalidCoefficient { beta: b, gamma: g });
            }
        }
        Ok(LatencyCoefficients { beta, gamma })
    }

    pub fn beta(&self) -> &Matrix {
        &self.beta
    }

    pub fn gamma(&self) -> &Matrix {
        &self.gamma
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterModel {
    platforms: Vec<Platform>,
    workload: Workload,
    coeffs: LatencyCoefficients,
}

impl ClusterModel {
    pub fn new(platforms: Vec<Platform>, workload: Workload, coeffs: LatencyCoefficients) -> Result<Self, ModelError> {
        if platforms.is_empty() {
            return Err(ModelError::InvalidPlatform {
                id: String::new(),
                reason: "cluster has no platforms".into(),
            });
        }
        let mut seen = HashSet::new();
        for p in &platforms {
            if !seen.insert(p.id.as_str()) {
                return Err(ModelError::InvalidPlatform {
                    id: p.id.clone(),
                    reason: "duplicate platform id".into(),
                });
            }
        }
        let expected = (platforms.len(), workload.len());
        if coeffs.beta.shape() != expected {
            return Err(ModelError::DimensionMismatch {
                expected,
                found: coeffs.beta.shape(),
            });
        }
        Ok(ClusterModel {
            platforms,
            workload,
            coeffs,
        })
    }

    pub fn platforms(&self) -> &[Platform] {
        &self.platforms
    }

    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    pub fn coeffs(&self) -> &LatencyCoefficients {
        &self.coeffs
    }

    pub fn platform_count(&self) -> usize {
        self.platforms.len()
    }

    pub fn task_count(&self) -> usize {
        self.workload.len()
    }

    pub fn beta(&self, i: usize, j: usize) -> f64 {
        self.coeffs.beta.get(i, j)
    }

    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        self.coeffs.gamma.get(i, j)
    }

    /// Seconds platform `i` needs for the whole of task `j`, setup excluded.
    pub fn proportional_latency(&self, i: usize, j: usize) -> f64 {
        self.beta(i, j) * self.workload.work(j)
    }

    /// Latency of platform `i` running every task on its own.
    pub fn full_workload_latency(&self, i: usize) -> f64 {
        (0..self.task_count())
            .map(|j| self.proportional_latency(i, j) + self.gamma(i, j))
            .sum()
    }

    /// Bill of platform `i` running every task on its own.
    pub fn full_workload_cost(&self, i: usize) -> f64 {
        predict_cost(self.full_workload_latency(i), &self.platforms[i])
    }

    /// Returns a copy with every price multiplied by `factor`.
    pub fn with_scaled_prices(&self, factor: f64) -> Result<Self, ModelError> {
        let platforms = self
            .platforms
            .iter()
            .map(|p| Platform::new(p.id.clone(), p.quantum_s, p.price_per_quantum * factor))
            .collect::<Result<Vec<_>, _>>()?;
        ClusterModel::new(platforms, self.workload.clone(), self.coeffs.clone())
    }
}

/// Inputs of the device rate model: a per-period ownership cost plus margin,
/// spread over the quanta of the period and scaled by relative performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub tco_per_period: f64,
    pub profit_margin: f64,
    pub quantum_s: f64,
    pub period_s: f64,
    pub relative_performance: f64,
}

/// Fractional task-to-platform assignment; every column sums to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct AllocationMatrix(Matrix);

impl AllocationMatrix {
    pub fn new(entries: Matrix) -> Result<Self, ModelError> {
        for i in 0..entries.rows() {
            for j in 0..entries.cols() {
                let v = entries.get(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return Err(ModelError::EntryOutOfRange {
                        platform: i,
                        task: j,
                        value: v,
                    });
                }
            }
        }
        for j in 0..entries.cols() {
            let sum: f64 = entries.column(j).sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOLERANCE {
                return Err(ModelError::ColumnSumViolation { task: j, sum });
            }
        }
        Ok(AllocationMatrix(entries))
    }

    /// Every task entirely on `platform`.
    pub fn single_platform(platforms: usize, tasks: usize, platform: usize) -> Self {
        AllocationMatrix(Matrix::from_fn(platforms, tasks, |i, _| {
            if i == platform {
                1.0
            } else {
                0.0
            }
        }))
    }

    /// Zeroes entries at or below [`ALLOCATION_EPSILON`] and rescales each
    /// column back to unit sum. Entries clamped into `[0, 1]` first, so this
    /// also accepts raw solver output.
    pub fn snapped(raw: &Matrix) -> Result<Self, ModelError> {
        let mut m = raw.clone();
        for j in 0..m.cols() {
            let mut sum = 0.0;
            for i in 0..m.rows() {
                let v = m.get(i, j).clamp(0.0, 1.0);
                let v = if v <= ALLOCATION_EPSILON { 0.0 } else { v };
                m.set(i, j, v);
                sum += v;
            }
            if sum <= 0.0 {
                return Err(ModelError::ColumnSumViolation { task: j, sum });
            }
            for i in 0..m.rows() {
                m.set(i, j, m.get(i, j) / sum);
            }
        }
        AllocationMatrix::new(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
}

/// An allocation together with everything derived from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionPlan {
    pub allocation: AllocationMatrix,
    /// 1 where the platform carries a nonzero share of the task.
    pub support: Vec<Vec<u8>>,
    pub platform_latency_s: Vec<f64>,
    pub makespan_s: f64,
    pub billed_quanta: Vec<u64>,
    pub total_cost: f64,
}

impl PartitionPlan {
    /// Platforms that carry any work.
    pub fn active_platforms(&self) -> impl Iterator<Item = usize> + '_ {
        self.support
            .iter()
            .enumerate()
            .filter(|(_, row)| row.iter().any(|&b| b == 1))
            .map(|(i, _)| i)
    }
}

/// `beta * work + gamma`.
pub fn predict_latency(beta: f64, gamma: f64, work: u64) -> Result<f64, ModelError> {
    if !(beta > 0.0) || !(gamma >= 0.0) {
        return Err(ModelError::InvalidCoefficient { beta, gamma });
    }
    Ok(beta * work as f64 + gamma)
}

/// Whole quanta billed for `latency_s` seconds of use.
pub fn billed_quanta(latency_s: f64, quantum_s: f64) -> u64 {
    if latency_s <= 0.0 {
        return 0;
    }
    let quanta = latency_s / quantum_s;
    (quanta - BILLING_SLACK).ceil().max(0.0) as u64
}

/// Charge for running `latency_s` seconds on `platform`.
pub fn predict_cost(latency_s: f64, platform: &Platform) -> f64 {
    billed_quanta(latency_s, platform.quantum_s) as f64 * platform.price_per_quantum
}

/// Price per quantum of a device from its ownership cost.
pub fn compute_rate(inputs: &RateInputs) -> Result<f64, ModelError> {
    if !(inputs.period_s > 0.0) {
        return Err(ModelError::InvalidPeriod(inputs.period_s));
    }
    if !(inputs.quantum_s > 0.0) {
        return Err(ModelError::InvalidQuantum(inputs.quantum_s));
    }
    if !(inputs.relative_performance > 0.0) {
        return Err(ModelError::InvalidRdp(inputs.relative_performance));
    }
    if !(inputs.tco_per_period >= 0.0) {
        return Err(ModelError::InvalidRateInput(format!(
            "tco_per_period must be nonnegative, got {}",
            inputs.tco_per_period
        )));
    }
    let base_rate = (inputs.tco_per_period + inputs.profit_margin) * (inputs.quantum_s / inputs.period_s);
    Ok(base_rate * inputs.relative_performance)
}

/// Derives per-platform latencies, makespan, billed quanta and cost for an
/// allocation. Shares at or below [`ALLOCATION_EPSILON`] are dropped first.
pub fn plan_from_allocation(cluster: &ClusterModel, allocation: &AllocationMatrix) -> Result<PartitionPlan, ModelError> {
    let expected = (cluster.platform_count(), cluster.task_count());
    if allocation.shape() != expected {
        return Err(ModelError::DimensionMismatch {
            expected,
            found: allocation.shape(),
        });
    }
    let allocation = AllocationMatrix::snapped(allocation.matrix())?;
    let (mu, tau) = expected;

    let mut support = vec![vec![0u8; tau]; mu];
    let mut platform_latency_s = vec![0.0; mu];
    let mut billed = vec![0u64; mu];
    let mut total_cost = 0.0;
    for i in 0..mu {
        let mut latency = 0.0;
        for j in 0..tau {
            let share = allocation.get(i, j);
            if share > 0.0 {
                support[i][j] = 1;
                latency += cluster.proportional_latency(i, j) * share + cluster.gamma(i, j);
            }
        }
        platform_latency_s[i] = latency;
        if support[i].contains(&1) {
            billed[i] = billed_quanta(latency, cluster.platforms[i].quantum_s);
            total_cost += billed[i] as f64 * cluster.platforms[i].price_per_quantum;
        }
    }
    let makespan_s = platform_latency_s.iter().copied().fold(0.0, f64::max);
    Ok(PartitionPlan {
        allocation,
        support,
        platform_latency_s,
        makespan_s,
        billed_quanta: billed,
        total_cost,
    })
}
