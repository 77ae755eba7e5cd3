//! Sequential versus data-parallel execution of a small Monte Carlo grid and
//! of one coupled fit.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pmtc::experiment::{preset, run_experiment, ExperimentConfig, Scenario};
use pmtc::pipeline::{fit_pmtc, FitOptions};
use pmtc::simulate::{gen_pmtc, SimDesign};
use pmtc::Exec;

fn small_grid() -> ExperimentConfig {
    let mut cfg = preset("fig2").expect("preset exists");
    cfg.model.set_parameter("p", 40.0).unwrap();
    cfg.model.set_parameter("periods", 20.0).unwrap();
    cfg.scenarios = vec![Scenario {
        name: "bench".into(),
        fixed: [("gamma_x".to_string(), -0.3)].into_iter().collect(),
        parameter: "gamma_y".into(),
        values: vec![-0.2, 0.0],
    }];
    cfg.panels.clear();
    cfg.replications = 4;
    cfg
}

fn replications(c: &mut Criterion) {
    let cfg = small_grid();
    let mut group = c.benchmark_group("experiment");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| run_experiment(&cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn single_fit(c: &mut Criterion) {
    let (data, _) = gen_pmtc(&SimDesign::default().with_size(100, 60)).unwrap();
    let mut group = c.benchmark_group("fit_p100_t60");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let opts = FitOptions { exec, ..FitOptions::new(vec![5, 5], 0) };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &opts, |b, opts| {
            b.iter(|| fit_pmtc(&data, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, replications, single_fit);
criterion_main!(benches);
