use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use strip_spectra::scattering::{default_modes, solve_on};
use strip_spectra::sparse::factorize;
use strip_spectra::spectra::compute_eigenpairs;
use strip_spectra::{Profile, Resolution};
use strip_spectra_bench::{hat_system, shifted};

fn factorization(c: &mut Criterion) {
    let mut g = c.benchmark_group("factorize");
    g.sample_size(10);
    for j in [16, 32] {
        let s = shifted(&hat_system(8.0, j));
        g.bench_with_input(BenchmarkId::from_parameter(j), &s, |b, s| b.iter(|| factorize(black_box(s)).unwrap()));
    }
    g.finish();
}

fn eigensolve(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigenpairs");
    g.sample_size(10);
    let hat = Profile::hat(1.0).unwrap();
    for j in [16, 32] {
        let params = Resolution::new(j).params(8.0, 0);
        g.bench_with_input(BenchmarkId::from_parameter(j), &params, |b, p| {
            b.iter(|| compute_eigenpairs(&hat, 8.0, 2, black_box(p)).unwrap())
        });
    }
    g.finish();
}

fn scattering(c: &mut Criterion) {
    let mut g = c.benchmark_group("scattering");
    g.sample_size(10);
    let hat = Profile::hat(1.0).unwrap();
    let params = Resolution::new(16).params(8.0, 0);
    g.bench_function("J16", |b| b.iter(|| solve_on(&hat, black_box(&params), default_modes(16)).unwrap()));
    g.finish();
}

criterion_group!(benches, factorization, eigensolve, scattering);
criterion_main!(benches);
