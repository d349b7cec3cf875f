//! Acceptance run. Each criterion prints one PASS/FAIL line to stderr and
//! the test fails if any criterion failed.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::{oracle, pairwise_antichain, small_instance};
use hetpart::benchmark::{budgeted_work_sizes, fit_latency_model, mc_price_with, prediction_error, synthetic_samples, McOption};
use hetpart::digest::json_digest;
use hetpart::heuristic::weighted_sweep;
use hetpart::heuristic::SweepWeight;
use hetpart::milp::{solve_partition, SolveOptions, SolveStatus};
use hetpart::models::{compute_rate, predict_cost, BILLING_SLACK, ClusterModel, PartitionPlan, Platform, RateInputs};
use hetpart::pareto::{cap_matched, compare, epsilon_sweep_report, heuristic_sweep_report, CostLevel, SweepReport, TradeoffCurve};
use hetpart::rng::stream;
use hetpart::sim::{simulate, simulate_many, NoiseSpec};
use hetpart::synth::{generate, Profile, SynthSpec};
use hetpart::Execution;
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn report(n: usize, title: &str, v: &Verdict) {
    // Written straight to the process stderr so the lines survive output
    // capture.
    let line = format!("criterion {n} {title}: {} ({})\n", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Sweeps collected by criteria 1 and 2 for the Pareto checks.
#[derive(Default)]
struct Sweeps {
    milp: Vec<SweepReport>,
    curves: Vec<TradeoffCurve>,
}

const SMALL_SHAPES: [(usize, usize); 5] = [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2)];
const SEEDS_PER_SHAPE: u64 = 12;

fn optimality(sweeps: &mut Sweeps) -> Verdict {
    let options = SolveOptions::default();
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut count = 0;
    for (mu, tau) in SMALL_SHAPES {
        for seed in 0..SEEDS_PER_SHAPE {
            let (cluster, cap) = small_instance(mu, tau, seed);
            let expected = oracle(&cluster, cap).value();
            let solved = solve_partition(&cluster, cap, &options).unwrap();
            count += 1;
            match solved.plan {
                Some(plan) => {
                    let err = relative(plan.makespan_s, expected);
                    worst = worst.max(err);
                    if err > 1e-3 {
                        failures.push(format!("{mu}x{tau} seed {seed}: {} vs {expected}", plan.makespan_s));
                    }
                }
                None => failures.push(format!("{mu}x{tau} seed {seed}: no plan ({:?})", solved.solution.status)),
            }
        }
    }
    let elapsed = started.elapsed();
    for (mu, tau) in SMALL_SHAPES {
        for seed in 0..SEEDS_PER_SHAPE {
            let (cluster, _) = small_instance(mu, tau, seed);
            let report = epsilon_sweep_report(&cluster, 6, &options, Execution::default()).unwrap();
            sweeps.curves.push(heuristic_sweep_report(&cluster, 6).unwrap().curve);
            sweeps.curves.push(report.curve.clone());
            sweeps.milp.push(report);
        }
    }
    Verdict {
        pass: count >= 50 && failures.is_empty() && elapsed < Duration::from_secs(300),
        detail: format!(
            "{count} instances, worst relative error {worst:.2e}, {:.1} s{}",
            elapsed.as_secs_f64(),
            if failures.is_empty() { String::new() } else { format!("; mismatches: {}", failures.join(", ")) }
        ),
    }
}

fn dominance(sweeps: &mut Sweeps, milp_plans: &mut Vec<(ClusterModel, PartitionPlan)>) -> Verdict {
    let options = SolveOptions::default();
    let started = Instant::now();
    let mut problems = Vec::new();
    let mut best_adversarial: Option<(u64, f64, f64)> = None;
    let mut shared_caps = 0;
    for profile in [Profile::Fleet, Profile::Adversarial] {
        for seed in 0..10 {
            let cluster = generate(&SynthSpec::new(profile, 6, 16, seed)).unwrap();
            let cmp = compare(&cluster, 10, &options, Execution::default()).unwrap();
            let matched = cap_matched(&cluster, &cmp.heuristic.curve, &options, Execution::default()).unwrap();
            shared_caps += matched.len();
            for m in matched.iter().filter(|m| !m.milp_no_worse()) {
                problems.push(format!("{profile:?} {seed}: cap {} milp {:?} heuristic {}", m.cost_cap, m.milp_makespan_s, m.heuristic_makespan_s));
            }
            let cheapest = cmp.row(CostLevel::Cheapest);
            if cheapest.cost_ratio != 1.0 || cheapest.latency_ratio != 1.0 {
                problems.push(format!("{profile:?} {seed}: cheapest ratios {} / {}", cheapest.cost_ratio, cheapest.latency_ratio));
            }
            if profile == Profile::Adversarial {
                let fast = cmp.row(CostLevel::Fastest).latency_ratio;
                let median = cmp.row(CostLevel::Median).cost_ratio;
                if fast >= 1.5 && median >= 1.3 && best_adversarial.is_none_or(|(_, f, _)| fast > f) {
                    best_adversarial = Some((seed, fast, median));
                }
            }
            for p in &cmp.milp.curve.points {
                milp_plans.push((cluster.clone(), p.plan.clone()));
            }
            sweeps.curves.push(cmp.heuristic.curve.clone());
            sweeps.curves.push(cmp.milp.curve.clone());
            sweeps.milp.push(cmp.milp);
        }
    }
    let elapsed = started.elapsed();
    let witness = match best_adversarial {
        Some((seed, fast, median)) => format!("adversarial seed {seed}: fastest latency ratio {fast:.2}, median cost ratio {median:.2}"),
        None => "no adversarial instance reached ratios 1.5 / 1.3".into(),
    };
    Verdict {
        pass: problems.is_empty() && best_adversarial.is_some() && elapsed < Duration::from_secs(600),
        detail: format!(
            "20 instances, {shared_caps} shared caps, {witness}, {:.1} s{}",
            elapsed.as_secs_f64(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join(", ")) }
        ),
    }
}

fn pareto_validity(sweeps: &Sweeps) -> Verdict {
    let mut bad_curves = 0;
    for curve in &sweeps.curves {
        let pairs: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.cost, p.makespan_s)).collect();
        if !pairwise_antichain(&pairs) {
            bad_curves += 1;
        }
    }
    let mut increases = 0;
    for report in &sweeps.milp {
        let makespans: Vec<f64> = report.entries.iter().filter_map(|e| e.point.as_ref().map(|p| p.makespan_s)).collect();
        increases += makespans.windows(2).filter(|w| w[1] > w[0]).count();
    }
    Verdict {
        pass: bad_curves == 0 && increases == 0,
        detail: format!(
            "{} curves, {bad_curves} not antichains; {} sweeps, {increases} makespan increases along the caps",
            sweeps.curves.len(),
            sweeps.milp.len()
        ),
    }
}

fn fit_accuracy() -> Verdict {
    let trials = 100;
    let mut errors = Vec::with_capacity(trials);
    for trial in 0..trials as u64 {
        let mut rng = stream(trial, 7);
        let beta = 10f64.powf(rng.random_range(-7.0..-5.0));
        let gamma = rng.random_range(0.1..5.0);
        // A ten-minute session over a tenfold range of sizes.
        let works = budgeted_work_sizes(beta, gamma, 600.0, 10, 2, 10.0).unwrap();
        let largest = *works.iter().max().unwrap();
        let holdout_works: Vec<u64> = (0..7).map(|k| largest * (4 + k)).collect();
        let fit = fit_latency_model(&synthetic_samples(beta, gamma, &works, 0.05, 2 * trial)).unwrap();
        let holdout = synthetic_samples(beta, gamma, &holdout_works, 0.05, 2 * trial + 1);
        errors.push(prediction_error(&fit, &holdout).unwrap().mean);
    }
    let mean = errors.iter().sum::<f64>() / trials as f64;
    let worst = errors.iter().copied().fold(0.0, f64::max);
    Verdict {
        pass: mean <= 0.10,
        detail: format!("{trials} trials, mean holdout error {:.2}%, worst trial {:.2}%", 100.0 * mean, 100.0 * worst),
    }
}

/// Hourly rate for a GPU offering from a simple ownership model.
///
/// Per device over the two-year recovery period: the $3120 purchase, 135 W
/// at a facility PUE of 1.8 and $0.10 per kWh, and a 1/5181 share of a
/// facility costing $10M a year to run. A 20% margin is added on top. Only
/// 80% of the hours are billed.
fn gpu_rate_inputs() -> RateInputs {
    let years = 2.0;
    let hours = years * 8760.0;
    let capital = 3120.0;
    let energy = 0.135 * 1.8 * hours * 0.10;
    let facility = 10.0e6 / 5181.0 * years;
    let tco = capital + energy + facility;
    RateInputs {
        tco_per_period: tco,
        profit_margin: 0.2 * tco,
        quantum_s: 3600.0,
        period_s: 0.8 * hours * 3600.0,
        relative_performance: 1.0,
    }
}

fn cost_exactness() -> Verdict {
    let mut failures = Vec::new();
    for (quantum, price) in [(60.0, 0.25), (3600.0, 0.65), (0.1, 3.0), (300.0, 0.0)] {
        let p = Platform::new("p", quantum, price).unwrap();
        // Overshoots up to BILLING_SLACK quanta are treated as roundoff.
        let eps = quantum * 1e3 * BILLING_SLACK;
        let cases = [(0.0, 0.0), (quantum, price), (quantum + eps, 2.0 * price), (7.0 * quantum, 7.0 * price), (1000.0 * quantum, 1000.0 * price)];
        for (latency, expected) in cases {
            let got = predict_cost(latency, &p);
            if got != expected {
                failures.push(format!("rho {quantum} L {latency}: {got} != {expected}"));
            }
        }
    }
    let half = compute_rate(&RateInputs {
        tco_per_period: 4380.0,
        profit_margin: 0.0,
        quantum_s: 3600.0,
        period_s: 8760.0 * 3600.0,
        relative_performance: 1.0,
    })
    .unwrap();
    if half != 0.5 {
        failures.push(format!("4380/8760 gave {half}"));
    }
    let gpu = compute_rate(&gpu_rate_inputs()).unwrap();
    if relative(gpu, 0.64) > 0.15 {
        failures.push(format!("GPU rate {gpu:.3}/h"));
    }
    Verdict {
        pass: failures.is_empty(),
        detail: format!(
            "boundary suite at 4 quanta, 4380/8760 -> {half}, GPU {gpu:.3}/h vs 0.64/h ({:+.1}%){}",
            100.0 * (gpu / 0.64 - 1.0),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    }
}

/// Largest makespan change that rounding shares to whole work units can
/// cause: each entry moves by at most `mu` units, and a share under `mu`
/// units may vanish along with its setup time.
fn integerization_allowance(cluster: &ClusterModel, plan: &PartitionPlan) -> f64 {
    let (mu, tau) = (cluster.platform_count(), cluster.task_count());
    let work = cluster.workload().tasks();
    (0..mu)
        .map(|i| {
            (0..tau)
                .filter(|&j| plan.support[i][j] == 1)
                .map(|j| {
                    let units = plan.allocation.get(i, j) * work[j].work as f64;
                    cluster.beta(i, j) * mu as f64 + if units < mu as f64 { cluster.gamma(i, j) } else { 0.0 }
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

fn simulator_fidelity(milp_plans: &[(ClusterModel, PartitionPlan)]) -> Verdict {
    let mut outside = 0;
    let mut worst_zero = 0.0f64;
    for (cluster, plan) in milp_plans {
        let r = simulate(plan, cluster, &NoiseSpec::new(0.0, 0.0, 0).unwrap()).unwrap();
        let diff = (r.realized_makespan_s - plan.makespan_s).abs();
        worst_zero = worst_zero.max(diff / plan.makespan_s);
        if diff > integerization_allowance(cluster, plan) + 1e-9 * plan.makespan_s {
            outside += 1;
        }
    }
    // Noisy replay of the fastest MILP plan of each instance.
    let mut worst_mean = 0.0f64;
    let mut plans_checked = 0;
    let noise = NoiseSpec::new(0.05, 0.05, 0).unwrap();
    for window in milp_plans.chunk_by(|a, b| json_digest(&a.0) == json_digest(&b.0)) {
        let (cluster, plan) = window.last().unwrap();
        let runs = simulate_many(plan, cluster, &noise, 0..100, Execution::default()).unwrap();
        let mean = runs.iter().map(|r| r.relative_makespan_error).sum::<f64>() / runs.len() as f64;
        worst_mean = worst_mean.max(mean);
        plans_checked += 1;
    }
    Verdict {
        pass: outside == 0 && worst_mean <= 0.10,
        detail: format!(
            "{} plans at zero noise, {outside} outside the integerization allowance (worst relative change {worst_zero:.1e}); sigma 0.05 over 100 seeds on {plans_checked} plans, worst mean error {:.2}%",
            milp_plans.len(),
            100.0 * worst_mean
        ),
    }
}

fn determinism() -> Verdict {
    let options = SolveOptions::default();
    let run = || -> Vec<(&'static str, String)> {
        let fleet = generate(&SynthSpec::new(Profile::Fleet, 4, 8, 3)).unwrap();
        let adversarial = generate(&SynthSpec::new(Profile::Adversarial, 3, 5, 4)).unwrap();
        let mut out = Vec::new();
        for cluster in [&fleet, &adversarial] {
            let cap = Some(1.3 * (0..cluster.platform_count()).map(|i| cluster.full_workload_cost(i)).fold(f64::INFINITY, f64::min));
            let solved = solve_partition(cluster, cap, &options).unwrap();
            out.push(("solver", json_digest(&(&solved.solution, &solved.plan))));
            let weights: Vec<SweepWeight> = SweepWeight::evenly_spaced(7);
            out.push(("heuristic", json_digest(&weighted_sweep(cluster, &weights).unwrap())));
            out.push(("sweep", json_digest(&epsilon_sweep_report(cluster, 5, &options, Execution::Parallel).unwrap())));
            out.push(("sweep", json_digest(&epsilon_sweep_report(cluster, 5, &options, Execution::Sequential).unwrap())));
            let plan = solved.plan.unwrap();
            let noise = NoiseSpec::new(0.05, 0.05, 0).unwrap();
            out.push(("simulation", json_digest(&simulate_many(&plan, cluster, &noise, 0..50, Execution::Parallel).unwrap())));
            out.push(("simulation", json_digest(&simulate_many(&plan, cluster, &noise, 0..50, Execution::Sequential).unwrap())));
        }
        let samples = synthetic_samples(2e-6, 1.5, &[1_000, 5_000, 10_000], 0.05, 9);
        out.push(("fit", json_digest(&fit_latency_model(&samples).unwrap())));
        let option = McOption {
            spot: 100.0,
            strike: 95.0,
            rate: 0.02,
            volatility: 0.25,
            maturity: 0.5,
        };
        out.push(("pricer", json_digest(&mc_price_with(&option, 100_000, 5, Execution::Parallel).unwrap())));
        out.push(("pricer", json_digest(&mc_price_with(&option, 100_000, 5, Execution::Sequential).unwrap())));
        out
    };
    let first = run();
    let second = run();
    let mut mismatched: Vec<&str> = first.iter().zip(&second).filter(|(a, b)| a.1 != b.1).map(|(a, _)| a.0).collect();
    // Parallel and sequential runs are listed in adjacent pairs.
    for pair in first.windows(2).filter(|w| w[0].0 == w[1].0) {
        if pair[0].1 != pair[1].1 {
            mismatched.push(pair[0].0);
        }
    }
    mismatched.dedup();
    Verdict {
        pass: mismatched.is_empty(),
        detail: format!(
            "{} digests compared across two runs and both execution modes{}",
            first.len(),
            if mismatched.is_empty() { String::new() } else { format!("; differing: {}", mismatched.join(", ")) }
        ),
    }
}

fn scale_smoke() -> Verdict {
    let options = SolveOptions::default();
    let cluster = generate(&SynthSpec::new(Profile::Fleet, 16, 128, 0)).unwrap();
    let started = Instant::now();
    let report = epsilon_sweep_report(&cluster, 10, &options, Execution::default()).unwrap();
    let elapsed = started.elapsed();
    let missing = report.entries.iter().filter(|e| e.point.is_none()).count();
    let gaps: Vec<f64> = report.entries.iter().filter_map(|e| e.point.as_ref().map(|p| p.solver_gap)).collect();
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    let optimal = report.entries.iter().filter(|e| e.status == SolveStatus::Optimal).count();
    // One uncapped solve plus at most one per cap, each held to the limit.
    let budget = options.time_limit_s * (report.entries.len() + 1) as f64;
    Verdict {
        pass: missing == 0 && worst <= 0.05 && elapsed.as_secs_f64() <= budget,
        detail: format!(
            "16x128, {} caps, {missing} without a plan, {optimal} optimal, worst gap {:.2}%, {:.0} s",
            report.entries.len(),
            100.0 * worst,
            elapsed.as_secs_f64()
        ),
    }
}

#[test]
fn acceptance() {
    let mut sweeps = Sweeps::default();
    let mut milp_plans = Vec::new();
    let mut verdicts = Vec::new();
    let mut record = |n: usize, title: &str, v: Verdict| {
        report(n, title, &v);
        verdicts.push((n, v.pass));
    };
    record(1, "branch-and-bound optimality", optimality(&mut sweeps));
    record(2, "heuristic/MILP dominance", dominance(&mut sweeps, &mut milp_plans));
    record(3, "Pareto validity", pareto_validity(&sweeps));
    record(4, "fit accuracy", fit_accuracy());
    record(5, "cost model exactness", cost_exactness());
    record(6, "simulator fidelity", simulator_fidelity(&milp_plans));
    record(7, "determinism", determinism());
    record(8, "scale smoke test", scale_smoke());
    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.1).map(|v| v.0).collect();
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
