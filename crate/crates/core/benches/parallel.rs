use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hetpart::benchmark::{mc_price_with, McOption};
use hetpart::heuristic::inverse_makespan_split;
use hetpart::milp::SolveOptions;
use hetpart::pareto::epsilon_sweep_report;
use hetpart::sim::{simulate_many, NoiseSpec};
use hetpart::synth::{generate, Profile, SynthSpec};
use hetpart::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn simulation(c: &mut Criterion) {
    let cluster = generate(&SynthSpec::new(Profile::Fleet, 16, 128, 1)).unwrap();
    let plan = inverse_makespan_split(&cluster).unwrap();
    let noise = NoiseSpec::new(0.05, 0.05, 0).unwrap();
    let mut group = c.benchmark_group("simulate_200_seeds");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_many(black_box(&plan), &cluster, &noise, 0..200, exec).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let cluster = generate(&SynthSpec::new(Profile::Fleet, 4, 8, 2)).unwrap();
    let options = SolveOptions::default();
    let mut group = c.benchmark_group("epsilon_sweep_4x8");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| epsilon_sweep_report(black_box(&cluster), 6, &options, exec).unwrap())
        });
    }
    group.finish();
}

fn pricing(c: &mut Criterion) {
    let option = McOption {
        spot: 100.0,
        strike: 100.0,
        rate: 0.03,
        volatility: 0.2,
        maturity: 1.0,
    };
    let mut group = c.benchmark_group("mc_price_1m_paths");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| mc_price_with(black_box(&option), 1 << 20, 3, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, simulation, sweep, pricing);
criterion_main!(benches);
