use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use hetpart::benchmark::{budgeted_work_sizes, fit_latency_model, measure_samples, prediction_error, synthetic_samples, McOption};
use hetpart::digest::{json_digest, sha256_hex};
use hetpart::heuristic::{weighted_sweep, SweepWeight};
use hetpart::milp::{build_milp, solve_partition, SolveOptions, SolveStatus};
use hetpart::models::{compute_rate, plan_from_allocation, AllocationMatrix, ClusterModel, Matrix, RateInputs};
use hetpart::pareto::{compare, epsilon_sweep_report, heuristic_sweep, Method, ParetoPoint, SweepEntry};
use hetpart::sim::{simulate_many, NoiseSpec};
use hetpart::synth::{generate, Profile, SynthSpec};
use hetpart::{Execution, PartitionPlan};
use serde::Serialize;

use crate::formats::*;
use crate::{Cli, CliError, Command, CurveMethod, Format, Outcome, ProfileArg, SolveMethod, SolverArgs};

/// Records what a command read and how it was configured.
struct Run<'a> {
    cli: &'a Cli,
    name: &'static str,
    started: Instant,
    inputs: Vec<u8>,
    options: BTreeMap<String, String>,
}

impl<'a> Run<'a> {
    fn new(cli: &'a Cli, name: &'static str) -> Self {
        let mut options = BTreeMap::new();
        options.insert("seed".into(), cli.common.seed.to_string());
        Run {
            cli,
            name,
            started: Instant::now(),
            inputs: Vec::new(),
            options,
        }
    }

    fn option(&mut self, key: &str, value: impl ToString) {
        self.options.insert(key.into(), value.to_string());
    }

    fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.extend_from_slice(&sha256_hex(&bytes).into_bytes());
        Ok(())
    }

    fn write(&self, file: &str, contents: &str) -> Result<(), CliError> {
        let dir = &self.cli.common.out;
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(file);
        fs::write(&path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn finish(self, outcome: Outcome) -> Result<Outcome, CliError> {
        let manifest = RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            command: self.name.into(),
            input_digest: sha256_hex(&self.inputs),
            options: self.options.clone(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        self.write(&format!("{}.manifest.json", self.name), &to_json(&manifest))?;
        Ok(outcome)
    }
}

/// Which encodings a table-shaped command writes.
fn wants(cli: &Cli, format: Format) -> bool {
    cli.common.format.is_none_or(|f| f == format)
}

fn json_only(cli: &Cli, command: &str) -> Result<(), CliError> {
    match cli.common.format {
        Some(Format::Csv) => Err(CliError::Usage(format!("`{command}` writes JSON only"))),
        _ => Ok(()),
    }
}

fn solve_options(args: &SolverArgs, run: &mut Run) -> Result<SolveOptions, CliError> {
    let options = SolveOptions {
        relative_gap_tol: args.gap,
        time_limit_s: args.time_limit,
        node_limit: args.node_limit,
        ..SolveOptions::default()
    };
    options.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    run.option("gap", args.gap);
    run.option("time_limit", args.time_limit);
    run.option("node_limit", args.node_limit);
    Ok(options)
}

fn load_cluster(path: &Path, run: &mut Run) -> Result<ClusterModel, CliError> {
    run.input(path)?;
    read_cluster(path)
}

fn model_error(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Fit { samples, holdout } => fit(cli, samples, holdout.as_deref()),
        Command::Rate { inputs } => rate(cli, inputs),
        Command::Solve {
            cluster,
            method,
            weight,
            cost_cap,
            dump_lp,
            solver,
        } => solve(cli, cluster, *method, *weight, *cost_cap, dump_lp.as_deref(), solver),
        Command::Pareto { cluster, points, method, solver } => pareto(cli, cluster, *points, *method, solver),
        Command::Simulate {
            plan,
            cluster,
            noise_beta,
            noise_gamma,
            seeds,
        } => simulate(cli, plan, cluster, *noise_beta, *noise_gamma, *seeds),
        Command::Compare { cluster, points, solver } => compare_cmd(cli, cluster, *points, solver),
        Command::Gen {
            profile,
            platforms,
            tasks,
            accuracy,
        } => gen(cli, *profile, *platforms, *tasks, *accuracy),
        Command::BenchGen { .. } => bench_gen(cli),
    }
}

fn fit(cli: &Cli, samples: &Path, holdout: Option<&Path>) -> Result<Outcome, CliError> {
    json_only(cli, "fit")?;
    let mut run = Run::new(cli, "fit");
    run.input(samples)?;
    let data = read_samples(samples)?;
    let fit = fit_latency_model(&data).map_err(model_error)?;
    let holdout = match holdout {
        Some(path) => {
            run.input(path)?;
            let report = prediction_error(&fit, &read_samples(path)?).map_err(model_error)?;
            Some(HoldoutSummary {
                count: report.relative_errors.len(),
                mean_relative_error: report.mean,
                max_relative_error: report.max,
            })
        }
        None => None,
    };
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    let file = FitFile {
        schema: FIT_SCHEMA.into(),
        beta: fit.beta,
        gamma: fit.gamma,
        max_relative_error: fit.max_relative_error,
        sample_count: fit.sample_count,
        warnings: fit.warnings.clone(),
        holdout,
    };
    run.write("fit.json", &to_json(&file))?;
    run.finish(Outcome::Done)
}

fn rate(cli: &Cli, inputs: &Path) -> Result<Outcome, CliError> {
    json_only(cli, "rate")?;
    let mut run = Run::new(cli, "rate");
    run.input(inputs)?;
    let file: RateInputsFile = read_json(inputs, RATE_INPUTS_SCHEMA)?;
    let model = RateInputs {
        tco_per_period: file.tco_per_period,
        profit_margin: file.profit_margin,
        quantum_s: file.quantum_s,
        period_s: file.period_s,
        relative_performance: file.relative_performance,
    };
    let price = compute_rate(&model).map_err(model_error)?;
    let out = RateFile {
        schema: RATE_SCHEMA.into(),
        price_per_quantum: price,
        price_per_hour: price * 3600.0 / file.quantum_s,
        inputs: file,
    };
    run.write("rate.json", &to_json(&out))?;
    run.finish(Outcome::Done)
}

fn status_name(status: SolveStatus) -> String {
    serde_json::to_value(status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn solve(
    cli: &Cli,
    cluster_path: &Path,
    method: SolveMethod,
    weight: Option<f64>,
    cost_cap: Option<f64>,
    dump_lp: Option<&Path>,
    solver: &SolverArgs,
) -> Result<Outcome, CliError> {
    json_only(cli, "solve")?;
    let mut run = Run::new(cli, "solve");
    let cluster = load_cluster(cluster_path, &mut run)?;
    let digest = json_digest(&cluster);
    let file = match method {
        SolveMethod::Heuristic => {
            if cost_cap.is_some() || dump_lp.is_some() {
                return Err(CliError::Usage("--cost-cap and --dump-lp apply to the MILP only".into()));
            }
            let w = SweepWeight::new(weight.unwrap_or(0.0)).map_err(|e| CliError::Usage(e.to_string()))?;
            run.option("method", "heuristic");
            run.option("weight", w.value());
            let plan = weighted_sweep(&cluster, &[w]).map_err(model_error)?.remove(0);
            PlanFile {
                schema: PLAN_SCHEMA.into(),
                cluster_digest: digest,
                method: "heuristic".into(),
                weight: Some(w.value()),
                cost_cap: None,
                solver: None,
                plan: PlanBody::from(&plan),
            }
        }
        SolveMethod::Milp => {
            if weight.is_some() {
                return Err(CliError::Usage("--weight applies to the heuristic only".into()));
            }
            let options = solve_options(solver, &mut run)?;
            run.option("method", "milp");
            if let Some(cap) = cost_cap {
                if !(cap >= 0.0 && cap.is_finite()) {
                    return Err(CliError::Usage(format!("--cost-cap must be a finite nonnegative number, got {cap}")));
                }
                run.option("cost_cap", cap);
            }
            if let Some(path) = dump_lp {
                let program = build_milp(&cluster, cost_cap).map_err(model_error)?;
                fs::write(path, program.to_lp_format()).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
            }
            let solved = solve_partition(&cluster, cost_cap, &options).map_err(model_error)?;
            let s = &solved.solution;
            let Some(plan) = solved.plan else {
                return Err(CliError::Infeasible(match s.status {
                    SolveStatus::LimitHit => "solver limit reached before any plan was found".into(),
                    _ => "no plan satisfies the cost cap".into(),
                }));
            };
            let outcome = if s.status == SolveStatus::FeasibleGap { Outcome::LimitHit } else { Outcome::Done };
            let file = PlanFile {
                schema: PLAN_SCHEMA.into(),
                cluster_digest: digest,
                method: "milp".into(),
                weight: None,
                cost_cap,
                solver: Some(SolveStats {
                    status: status_name(s.status),
                    gap: s.gap,
                    bound: s.bound,
                    nodes: s.nodes_explored,
                    lp_iterations: s.lp_iterations,
                }),
                plan: PlanBody::from(&plan),
            };
            run.write("plan.json", &to_json(&file))?;
            return run.finish(outcome);
        }
    };
    run.write("plan.json", &to_json(&file))?;
    run.finish(Outcome::Done)
}

#[derive(Serialize)]
struct CurvePoint {
    method: Method,
    cost: f64,
    makespan_s: f64,
    gap: f64,
    plan: PlanBody,
}

impl From<&ParetoPoint> for CurvePoint {
    fn from(p: &ParetoPoint) -> Self {
        CurvePoint {
            method: p.method,
            cost: p.cost,
            makespan_s: p.makespan_s,
            gap: p.solver_gap,
            plan: PlanBody::from(&p.plan),
        }
    }
}

#[derive(Serialize)]
struct SweepRecord {
    k: usize,
    cost_cap: f64,
    status: SolveStatus,
    bound: f64,
    nodes: u64,
    plan_from: Option<usize>,
    cost: Option<f64>,
    makespan_s: Option<f64>,
    gap: Option<f64>,
}

impl From<&SweepEntry> for SweepRecord {
    fn from(e: &SweepEntry) -> Self {
        SweepRecord {
            k: e.k,
            cost_cap: e.cost_cap,
            status: e.status,
            bound: e.bound,
            nodes: e.nodes,
            plan_from: e.plan_from,
            cost: e.point.as_ref().map(|p| p.cost),
            makespan_s: e.point.as_ref().map(|p| p.makespan_s),
            gap: e.point.as_ref().map(|p| p.solver_gap),
        }
    }
}

#[derive(Serialize)]
struct CurveFile {
    schema: String,
    cluster_digest: String,
    point_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    cost_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cost_high: Option<f64>,
    sweep: Vec<SweepRecord>,
    points: Vec<CurvePoint>,
}

fn pareto(cli: &Cli, cluster_path: &Path, points: usize, method: CurveMethod, solver: &SolverArgs) -> Result<Outcome, CliError> {
    let mut run = Run::new(cli, "pareto");
    let cluster = load_cluster(cluster_path, &mut run)?;
    let options = solve_options(solver, &mut run)?;
    run.option("points", points);
    run.option("method", format!("{method:?}").to_lowercase());
    if points < 2 {
        return Err(CliError::Usage(format!("--points must be at least 2, got {points}")));
    }
    let mut file = CurveFile {
        schema: CURVE_SCHEMA.into(),
        cluster_digest: json_digest(&cluster),
        point_count: points,
        cost_low: None,
        cost_high: None,
        sweep: Vec::new(),
        points: Vec::new(),
    };
    let mut outcome = Outcome::Done;
    if method != CurveMethod::Heuristic {
        let report = epsilon_sweep_report(&cluster, points, &options, Execution::default()).map_err(model_error)?;
        if report.entries.iter().any(|e| !matches!(e.status, SolveStatus::Optimal | SolveStatus::Infeasible)) {
            outcome = Outcome::LimitHit;
        }
        file.cost_low = Some(report.cost_low);
        file.cost_high = Some(report.cost_high);
        file.sweep = report.entries.iter().map(SweepRecord::from).collect();
        file.points.extend(report.curve.points.iter().map(CurvePoint::from));
    }
    if method != CurveMethod::Milp {
        let curve = heuristic_sweep(&cluster, points).map_err(model_error)?;
        file.points.extend(curve.points.iter().map(CurvePoint::from));
    }
    if wants(cli, Format::Csv) {
        let mut csv = String::from("method,cost,makespan_s,gap\n");
        for p in &file.points {
            csv.push_str(&format!("{},{},{},{}\n", p.method.name(), p.cost, p.makespan_s, p.gap));
        }
        run.write("curve.csv", &csv)?;
    }
    if wants(cli, Format::Json) {
        run.write("curve.json", &to_json(&file))?;
    }
    run.finish(outcome)
}

fn plan_from_file(file: &PlanFile, cluster: &ClusterModel) -> Result<PartitionPlan, CliError> {
    let invalid = |e: hetpart::models::ModelError| CliError::Input(format!("invalid plan: {e}"));
    let matrix = Matrix::from_rows(file.plan.allocation.clone()).map_err(invalid)?;
    let allocation = AllocationMatrix::new(matrix).map_err(invalid)?;
    plan_from_allocation(cluster, &allocation).map_err(invalid)
}

#[derive(Serialize)]
struct SimulationFile {
    schema: String,
    cluster_digest: String,
    noise_beta: f64,
    noise_gamma: f64,
    first_seed: u64,
    seed_count: u64,
    predicted_makespan_s: f64,
    mean_realized_makespan_s: f64,
    mean_realized_cost: f64,
    mean_relative_error: f64,
    max_relative_error: f64,
}

fn simulate(cli: &Cli, plan_path: &Path, cluster_path: &Path, noise_beta: f64, noise_gamma: f64, seeds: u64) -> Result<Outcome, CliError> {
    let mut run = Run::new(cli, "simulate");
    run.input(plan_path)?;
    let cluster = load_cluster(cluster_path, &mut run)?;
    run.option("noise_beta", noise_beta);
    run.option("noise_gamma", noise_gamma);
    run.option("seeds", seeds);
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let file: PlanFile = read_json(plan_path, PLAN_SCHEMA)?;
    let digest = json_digest(&cluster);
    if file.cluster_digest != digest {
        return Err(CliError::Input(format!(
            "plan was computed for cluster {} but {} has digest {digest}",
            file.cluster_digest,
            cluster_path.display()
        )));
    }
    let plan = plan_from_file(&file, &cluster)?;
    let noise = NoiseSpec::new(noise_beta, noise_gamma, 0).map_err(|e| CliError::Usage(e.to_string()))?;
    let first = cli.common.seed;
    let end = first.checked_add(seeds).ok_or_else(|| CliError::Usage("seed range overflows".into()))?;
    let results = simulate_many(&plan, &cluster, &noise, first..end, Execution::default()).map_err(model_error)?;

    if wants(cli, Format::Csv) {
        let mut csv = String::from("seed,realized_makespan_s,realized_cost,relative_error\n");
        for (seed, r) in (first..end).zip(&results) {
            csv.push_str(&format!("{seed},{},{},{}\n", r.realized_makespan_s, r.realized_cost, r.relative_makespan_error));
        }
        run.write("simulation.csv", &csv)?;
    }
    if wants(cli, Format::Json) {
        let n = results.len() as f64;
        let mean = |f: &dyn Fn(&hetpart::sim::SimResult) -> f64| results.iter().map(f).sum::<f64>() / n;
        let summary = SimulationFile {
            schema: SIMULATION_SCHEMA.into(),
            cluster_digest: digest,
            noise_beta,
            noise_gamma,
            first_seed: first,
            seed_count: seeds,
            predicted_makespan_s: plan.makespan_s,
            mean_realized_makespan_s: mean(&|r| r.realized_makespan_s),
            mean_realized_cost: mean(&|r| r.realized_cost),
            mean_relative_error: mean(&|r| r.relative_makespan_error),
            max_relative_error: results.iter().map(|r| r.relative_makespan_error).fold(0.0, f64::max),
        };
        run.write("simulation.json", &to_json(&summary))?;
    }
    run.finish(Outcome::Done)
}

#[derive(Serialize)]
struct CompareFile {
    schema: String,
    cluster_digest: String,
    point_count: usize,
    rows: Vec<hetpart::pareto::ComparisonRow>,
    milp_sweep: Vec<SweepRecord>,
}

fn compare_cmd(cli: &Cli, cluster_path: &Path, points: usize, solver: &SolverArgs) -> Result<Outcome, CliError> {
    let mut run = Run::new(cli, "compare");
    let cluster = load_cluster(cluster_path, &mut run)?;
    let options = solve_options(solver, &mut run)?;
    run.option("points", points);
    if points < 2 {
        return Err(CliError::Usage(format!("--points must be at least 2, got {points}")));
    }
    let result = compare(&cluster, points, &options, Execution::default()).map_err(model_error)?;
    let limited = result.milp.entries.iter().any(|e| !matches!(e.status, SolveStatus::Optimal | SolveStatus::Infeasible));
    if wants(cli, Format::Csv) {
        let mut csv = String::from("level,heuristic_cost,heuristic_makespan_s,milp_cost,milp_makespan_s,cost_ratio,latency_ratio,milp_gap\n");
        for r in &result.rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.level.name(),
                r.heuristic_cost,
                r.heuristic_makespan_s,
                r.milp_cost,
                r.milp_makespan_s,
                r.cost_ratio,
                r.latency_ratio,
                r.milp_gap
            ));
        }
        run.write("compare.csv", &csv)?;
    }
    if wants(cli, Format::Json) {
        let file = CompareFile {
            schema: COMPARE_SCHEMA.into(),
            cluster_digest: result.cluster_digest.clone(),
            point_count: points,
            rows: result.rows.clone(),
            milp_sweep: result.milp.entries.iter().map(SweepRecord::from).collect(),
        };
        run.write("compare.json", &to_json(&file))?;
    }
    run.finish(if limited { Outcome::LimitHit } else { Outcome::Done })
}

fn gen(cli: &Cli, profile: ProfileArg, platforms: usize, tasks: usize, accuracy: f64) -> Result<Outcome, CliError> {
    json_only(cli, "gen")?;
    let mut run = Run::new(cli, "gen");
    let profile = match profile {
        ProfileArg::Fleet => Profile::Fleet,
        ProfileArg::Adversarial => Profile::Adversarial,
        ProfileArg::Symmetric => Profile::Symmetric,
    };
    run.option("profile", format!("{profile:?}").to_lowercase());
    run.option("platforms", platforms);
    run.option("tasks", tasks);
    run.option("accuracy", accuracy);
    let spec = SynthSpec {
        accuracy,
        ..SynthSpec::new(profile, platforms, tasks, cli.common.seed)
    };
    let cluster = generate(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    run.write("cluster.json", &to_json(&ClusterFile::from_model(&cluster)))?;
    run.finish(Outcome::Done)
}

/// Option timed by `bench-gen --measure`.
const MEASURED_OPTION: McOption = McOption {
    spot: 100.0,
    strike: 100.0,
    rate: 0.03,
    volatility: 0.2,
    maturity: 1.0,
};

/// `count` sizes spread evenly from 4 to 10 times `largest`.
fn holdout_sizes(largest: u64, count: usize) -> Vec<u64> {
    (0..count)
        .map(|k| {
            let factor = if count == 1 { 7.0 } else { 4.0 + 6.0 * k as f64 / (count - 1) as f64 };
            (largest as f64 * factor).round() as u64
        })
        .collect()
}

fn bench_gen(cli: &Cli) -> Result<Outcome, CliError> {
    let Command::BenchGen {
        beta,
        gamma,
        budget_s,
        points,
        repeats,
        span,
        noise,
        holdout,
        measure,
    } = cli.command
    else {
        unreachable!("dispatched on the variant");
    };
    if cli.common.format == Some(Format::Json) {
        return Err(CliError::Usage("`bench-gen` writes CSV only".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(CliError::Usage(format!("--noise must be finite and nonnegative, got {noise}")));
    }
    let mut run = Run::new(cli, "bench-gen");
    for (k, v) in [("beta", beta), ("gamma", gamma), ("budget_s", budget_s), ("span", span), ("noise", noise)] {
        run.option(k, v);
    }
    run.option("points", points);
    run.option("repeats", repeats);
    run.option("holdout", holdout);
    run.option("measure", measure);
    let works = budgeted_work_sizes(beta, gamma, budget_s, points, repeats, span).map_err(|e| CliError::Usage(e.to_string()))?;
    let largest = works.iter().copied().max().unwrap_or(1);
    let held = holdout_sizes(largest, holdout);
    let seed = cli.common.seed;
    let (samples, held_samples) = if measure {
        let s = measure_samples(&MEASURED_OPTION, &works, seed).map_err(model_error)?;
        let h = measure_samples(&MEASURED_OPTION, &held, seed).map_err(model_error)?;
        (s, h)
    } else {
        (
            synthetic_samples(beta, gamma, &works, noise, seed),
            synthetic_samples(beta, gamma, &held, noise, seed.wrapping_add(1)),
        )
    };
    run.write("samples.csv", &samples_csv(&samples))?;
    if holdout > 0 {
        run.write("holdout.csv", &samples_csv(&held_samples))?;
    }
    run.finish(Outcome::Done)
}
