use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use beliefmap::belief::{recover_q_with, verify_consistency_with, BeliefTensor, RewardMap};
use beliefmap::config::{Algorithm, Preset, RunConfig};
use beliefmap::eval::evaluate_table;
use beliefmap::par::Execution;
use beliefmap::tabular::InitMode;
use beliefmap::train::{train_seeds, train_tabular};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn taxi_tensor() -> (BeliefTensor, RewardMap) {
    let env = beliefmap::envs::make_taxi();
    let h = BeliefTensor::new(500, 6, 0.9, InitMode::Random { seed: 1, scale: 1.0 });
    (h, RewardMap::from_env(&env))
}

fn recovery(c: &mut Criterion) {
    let (h, r) = taxi_tensor();
    let q = recover_q_with(&h, &r, Execution::Sequential).unwrap();
    let mut g = c.benchmark_group("taxi_belief");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("recover_q", name), &exec, |b, &e| {
            b.iter(|| recover_q_with(&h, &r, e).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("verify", name), &exec, |b, &e| {
            b.iter(|| verify_consistency_with(&h, &q, &r, e).unwrap())
        });
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let mut cfg = RunConfig::preset(Preset::TaxiSupp, Algorithm::Q, 0);
    cfg.episodes = 200;
    let seeds: Vec<u64> = (1..=4).collect();
    let mut g = c.benchmark_group("taxi_seed_sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| train_seeds(&cfg, &seeds, e))
        });
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let mut cfg = RunConfig::preset(Preset::TaxiSupp, Algorithm::Q, 1);
    cfg.episodes = 500;
    let run = train_tabular(&cfg).unwrap();
    let q = run.model.acting_table();
    let mut g = c.benchmark_group("taxi_greedy_eval");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &e| {
            b.iter(|| evaluate_table(&cfg.env, &q, 200, 200, 7, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, recovery, sweep, evaluation);
criterion_main!(benches);
