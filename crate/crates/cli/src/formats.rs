//! On-disk formats. Every JSON document carries a `schema` tag that must
//! match exactly; unknown fields are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use hetpart::benchmark::BenchmarkSample;
use hetpart::models::{ClusterModel, LatencyCoefficients, Matrix, Platform, Task, Workload};
use hetpart::PartitionPlan;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CLUSTER_SCHEMA: &str = "hetpart/cluster/v1";
pub const PLAN_SCHEMA: &str = "hetpart/plan/v1";
pub const FIT_SCHEMA: &str = "hetpart/fit/v1";
pub const RATE_INPUTS_SCHEMA: &str = "hetpart/rate-inputs/v1";
pub const RATE_SCHEMA: &str = "hetpart/rate/v1";
pub const CURVE_SCHEMA: &str = "hetpart/curve/v1";
pub const COMPARE_SCHEMA: &str = "hetpart/compare/v1";
pub const SIMULATION_SCHEMA: &str = "hetpart/simulation/v1";
pub const MANIFEST_SCHEMA: &str = "hetpart/manifest/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceUnit {
    PerQuantum,
    PerHour,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformEntry {
    pub id: String,
    pub quantum_s: f64,
    pub price: f64,
    pub price_unit: PriceUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub id: String,
    pub work: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterFile {
    pub schema: String,
    pub platforms: Vec<PlatformEntry>,
    pub tasks: Vec<TaskEntry>,
    /// Platform-major.
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
}

impl ClusterFile {
    pub fn from_model(cluster: &ClusterModel) -> Self {
        ClusterFile {
            schema: CLUSTER_SCHEMA.into(),
            platforms: cluster
                .platforms()
                .iter()
                .map(|p| PlatformEntry {
                    id: p.id.clone(),
                    quantum_s: p.quantum_s,
                    price: p.price_per_quantum,
                    price_unit: PriceUnit::PerQuantum,
                })
                .collect(),
            tasks: cluster.workload().tasks().to_vec().into_iter().map(|t| TaskEntry { id: t.id, work: t.work }).collect(),
            beta: cluster.coeffs().beta().to_rows(),
            gamma: cluster.coeffs().gamma().to_rows(),
        }
    }

    pub fn into_model(self) -> Result<ClusterModel, CliError> {
        let invalid = |e: hetpart::models::ModelError| CliError::Input(format!("invalid cluster: {e}"));
        let platforms = self
            .platforms
            .into_iter()
            .map(|p| match p.price_unit {
                PriceUnit::PerQuantum => Platform::new(p.id, p.quantum_s, p.price),
                PriceUnit::PerHour => Platform::from_hourly_rate(p.id, p.quantum_s, p.price),
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(invalid)?;
        let workload = Workload::new(self.tasks.into_iter().map(|t| Task::new(t.id, t.work)).collect()).map_err(invalid)?;
        let coeffs = LatencyCoefficients::new(Matrix::from_rows(self.beta).map_err(invalid)?, Matrix::from_rows(self.gamma).map_err(invalid)?).map_err(invalid)?;
        ClusterModel::new(platforms, workload, coeffs).map_err(invalid)
    }
}

/// Solver statistics stored next to a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveStats {
    pub status: String,
    pub gap: f64,
    pub bound: f64,
    pub nodes: u64,
    pub lp_iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanBody {
    pub allocation: Vec<Vec<f64>>,
    pub support: Vec<Vec<u8>>,
    pub platform_latency_s: Vec<f64>,
    pub makespan_s: f64,
    pub billed_quanta: Vec<u64>,
    pub total_cost: f64,
}

impl From<&PartitionPlan> for PlanBody {
    fn from(p: &PartitionPlan) -> Self {
        PlanBody {
            allocation: p.allocation.matrix().to_rows(),
            support: p.support.clone(),
            platform_latency_s: p.platform_latency_s.clone(),
            makespan_s: p.makespan_s,
            billed_quanta: p.billed_quanta.clone(),
            total_cost: p.total_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub schema: String,
    pub cluster_digest: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolveStats>,
    pub plan: PlanBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoldoutSummary {
    pub count: usize,
    pub mean_relative_error: f64,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFile {
    pub schema: String,
    pub beta: f64,
    pub gamma: f64,
    pub max_relative_error: f64,
    pub sample_count: usize,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout: Option<HoldoutSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateInputsFile {
    pub schema: String,
    pub tco_per_period: f64,
    pub profit_margin: f64,
    pub quantum_s: f64,
    pub period_s: f64,
    pub relative_performance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateFile {
    pub schema: String,
    pub inputs: RateInputsFile,
    pub price_per_quantum: f64,
    pub price_per_hour: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    /// Digest over the contents of every input file, in argument order.
    pub input_digest: String,
    pub options: BTreeMap<String, String>,
    pub tool_version: String,
    pub wall_time_s: f64,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

/// Reads a JSON document and checks its `schema` tag before decoding the
/// rest, so that a wrong file type gives a clear message.
pub fn read_json<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<T, CliError> {
    let text = read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: malformed JSON: {e}", path.display())))?;
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(found) if found == schema => {}
        Some(found) => {
            return Err(CliError::Input(format!("{}: schema is `{found}`, expected `{schema}`", path.display())));
        }
        None => return Err(CliError::Input(format!("{}: missing `schema` field (expected `{schema}`)", path.display()))),
    }
    serde_json::from_value(value).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn read_cluster(path: &Path) -> Result<ClusterModel, CliError> {
    read_json::<ClusterFile>(path, CLUSTER_SCHEMA)?.into_model()
}

/// Parses `work,latency_s` rows. Errors name the 1-based file line.
pub fn parse_samples(text: &str, origin: &str) -> Result<Vec<BenchmarkSample>, CliError> {
    let malformed = |line: u64, what: String| CliError::Input(format!("{origin}: malformed CSV at line {line}: {what}"));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "work" || &headers[1] != "latency_s" {
        return Err(malformed(1, format!("expected header `work,latency_s`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(malformed(line, format!("expected 2 fields, found {}", record.len())));
        }
        let work: u64 = record[0].parse().map_err(|_| malformed(line, format!("work `{}` is not a nonnegative integer", &record[0])))?;
        let latency: f64 = record[1].parse().map_err(|_| malformed(line, format!("latency `{}` is not a number", &record[1])))?;
        let sample = BenchmarkSample::new(work, latency).map_err(|e| malformed(line, e.to_string()))?;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(malformed(1, "no samples".into()));
    }
    Ok(samples)
}

pub fn read_samples(path: &Path) -> Result<Vec<BenchmarkSample>, CliError> {
    parse_samples(&read_text(path)?, &path.display().to_string())
}

pub fn samples_csv(samples: &[BenchmarkSample]) -> String {
    let mut out = String::from("work,latency_s\n");
    for s in samples {
        out.push_str(&format!("{},{}\n", s.work, s.latency_s));
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}
