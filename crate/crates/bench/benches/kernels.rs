use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use waveleton::cutoff::solve_problem;
use waveleton::io::demos::load_demo;
use waveleton::operator::connection_coefficients;
use waveleton::solver::{system::DEFAULT_MEMORY_BUDGET, SolverSettings};
use waveleton::wavelet::{forward_transform, inverse_transform, make_family};

fn transforms(c: &mut Criterion) {
    let mut g = c.benchmark_group("transform");
    for order in [2, 5, 10] {
        let family = make_family(order).unwrap();
        let x: Vec<f64> = (0..4096).map(|i| (i as f64 * 0.013).sin()).collect();
        g.bench_with_input(BenchmarkId::new("forward_4096", order), &order, |b, _| {
            b.iter(|| forward_transform(&family, black_box(&x), 10).unwrap())
        });
        let y = forward_transform(&family, &x, 10).unwrap();
        g.bench_with_input(BenchmarkId::new("inverse_4096", order), &order, |b, _| {
            b.iter(|| inverse_transform(&family, black_box(&y), 10).unwrap())
        });
    }
    g.finish();
}

fn connection(c: &mut Criterion) {
    let mut g = c.benchmark_group("connection");
    for order in [3, 6, 10] {
        let family = make_family(order).unwrap();
        g.bench_with_input(BenchmarkId::new("d1", order), &order, |b, _| {
            b.iter(|| connection_coefficients(black_box(&family), 1).unwrap())
        });
    }
    g.finish();
}

fn assembly_and_solve(c: &mut Criterion) {
    let problem = load_demo("free_streaming").unwrap().build().unwrap();
    let settings = SolverSettings::default();
    let mut g = c.benchmark_group("galerkin");
    g.sample_size(10);
    for level in [3u32, 4] {
        g.bench_with_input(BenchmarkId::new("assemble", level), &level, |b, &l| {
            b.iter(|| problem.system(l, 1, DEFAULT_MEMORY_BUDGET).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("solve", level), &level, |b, &l| {
            b.iter(|| solve_problem(&problem, l, 1, &settings, DEFAULT_MEMORY_BUDGET).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, transforms, connection, assembly_and_solve);
criterion_main!(benches);
