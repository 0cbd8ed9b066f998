//! Rayon versus sequential execution of the data-parallel hot paths.
//!
//! With the default `parallel` feature each workload runs twice: on the
//! global rayon pool and inside a one-thread pool. Built with
//! `--no-default-features` only the sequential shim is measured.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use surfspin::fitting::{fit_sweep, SweepFitOptions};
use surfspin::synth::{hydrogen_surface_model, hydrogen_surface_scenario, synthesize, Dataset};

fn run<T>(mode: &str, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        "single_thread" => rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("thread pool")
            .install(f),
        _ => f(),
    }
}

fn modes() -> &'static [&'static str] {
    if surfspin::par::is_parallel() {
        &["rayon", "single_thread"]
    } else {
        &["sequential"]
    }
}

fn bench_sweep(c: &mut Criterion) {
    let model = hydrogen_surface_model().unwrap();
    let fields: Vec<f64> = (0..20_000).map(|i| 0.3 * i as f64 / 19_999.0).collect();
    let mut g = c.benchmark_group("evaluate_sweep_20k");
    for &mode in modes() {
        g.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| run(mode, || black_box(model.evaluate_sweep(black_box(&fields)))))
        });
    }
    g.finish();
}

fn bench_fit(c: &mut Criterion) {
    let model = hydrogen_surface_model().unwrap();
    let mut sc = hydrogen_surface_scenario(7).unwrap();
    if let surfspin::synth::ScenarioKind::Sweep { flux_jumps, .. } = &mut sc.kind {
        *flux_jumps = None;
    }
    let Dataset::Sweep(trace) = synthesize(&sc).unwrap().dataset else {
        unreachable!()
    };
    let opts = SweepFitOptions::default();
    let mut g = c.benchmark_group("fit_sweep");
    g.sample_size(10);
    for &mode in modes() {
        g.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| run(mode, || black_box(fit_sweep(&trace, &model, &opts).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_sweep, bench_fit);
criterion_main!(benches);
