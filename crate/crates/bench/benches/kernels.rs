use bathsmith_bench::{effective_model, full_model, short_horizon};
use bathsmith_core::bcf::{bcf_quadrature, count_peaks, filtered_spectrum, DEFAULT_PROMINENCE};
use bathsmith_core::chainmap::{chain_to_star, lanczos_coefficients, Measure};
use bathsmith_core::dynamics::cumulant_lineshape;
use bathsmith_core::estimator::{heom_count, HeomCostQuery};
use bathsmith_core::TimeGrid;
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn correlation(c: &mut Criterion) {
    let mut group = c.benchmark_group("bcf");
    group.sample_size(10);
    let p = short_horizon();
    for (name, model) in [("full", full_model()), ("effective", effective_model())] {
        group.bench_function(format!("quadrature_{name}"), |b| b.iter(|| bcf_quadrature(black_box(&model), &p).unwrap()));
    }
    let full = full_model();
    group.bench_function("peak_census_full", |b| {
        b.iter(|| count_peaks(&filtered_spectrum(&full, &p).unwrap(), DEFAULT_PROMINENCE).unwrap())
    });
    group.finish();
}

fn chain(c: &mut Criterion) {
    let mut group = c.benchmark_group("chain");
    group.sample_size(10);
    let measure = Measure::thermalized(&full_model(), 77.0, (-2000.0, 3000.0)).unwrap();
    for n in [10usize, 25, 51] {
        group.bench_function(format!("lanczos_{n}"), |b| b.iter(|| lanczos_coefficients(black_box(&measure), n).unwrap()));
    }
    let coeffs = lanczos_coefficients(&measure, 51).unwrap();
    group.bench_function("star_51", |b| b.iter(|| chain_to_star(black_box(&coeffs)).unwrap()));
    group.finish();
}

fn lineshape(c: &mut Criterion) {
    let mut group = c.benchmark_group("cumulant");
    group.sample_size(10);
    let grid = TimeGrid::new(1.0, 600.0).unwrap();
    for (name, model) in [("full", full_model()), ("effective", effective_model())] {
        group.bench_function(name, |b| b.iter(|| cumulant_lineshape(black_box(&model), 77.0, &grid).unwrap()));
    }
    group.finish();
}

fn estimator(c: &mut Criterion) {
    let q = HeomCostQuery::absorption(30, 62, 8);
    c.bench_function("heom_count_30_62_8", |b| b.iter(|| heom_count(black_box(&q))));
}

criterion_group!(benches, correlation, chain, lineshape, estimator);
criterion_main!(benches);
