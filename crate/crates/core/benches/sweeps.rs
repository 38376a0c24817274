use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use thinfb::analysis::{radius_ladder, weiss_profile, DEFAULT_KAPPA};
use thinfb::coefficients::{generate_field, CoefficientField};
use thinfb::profiles::Profile;
use thinfb::solver::{assemble, solve_psor, Obstacle, PsorConfig};
use thinfb::{Grid, Parallelism};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn psor(c: &mut Criterion) {
    let mut group = c.benchmark_group("psor");
    group.sample_size(10);
    for (n, h) in [(1, 1.0 / 256.0), (2, 1.0 / 32.0)] {
        let g = Grid::new(n, h).unwrap();
        let coeffs = CoefficientField::identity(g);
        let data = Profile::h32(n).sample(&g);
        let p = assemble(&g, &coeffs, &data, Obstacle::Zero).unwrap();
        for (name, par) in MODES {
            let cfg = PsorConfig {
                parallelism: par,
                ..PsorConfig::default()
            };
            group.bench_with_input(BenchmarkId::new(name, format!("n{n}_N{}", g.intervals())), &cfg, |b, cfg| {
                b.iter(|| solve_psor(black_box(&p), cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn variable_coefficients(c: &mut Criterion) {
    let mut group = c.benchmark_group("psor_generated");
    group.sample_size(10);
    let g = Grid::new(2, 1.0 / 16.0).unwrap();
    let coeffs = generate_field(0.75, 0.05, 1, &g).unwrap();
    let data = Profile::h32(2).sample(&g);
    let p = assemble(&g, &coeffs, &data, Obstacle::Zero).unwrap();
    for (name, par) in MODES {
        let cfg = PsorConfig {
            parallelism: par,
            ..PsorConfig::default()
        };
        group.bench_function(name, |b| b.iter(|| solve_psor(black_box(&p), &cfg).unwrap()));
    }
    group.finish();
}

fn weiss_ladder(c: &mut Criterion) {
    let mut group = c.benchmark_group("weiss_ladder");
    group.sample_size(10);
    let g = Grid::new(1, 1.0 / 512.0).unwrap();
    let w = Profile::h32(1).sample(&g);
    let radii = radius_ladder(g.h());
    for (name, par) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| weiss_profile(black_box(&w), &[0.0; 3], DEFAULT_KAPPA, &radii, par).unwrap())
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_profile");
    let g = Grid::new(2, 1.0 / 64.0).unwrap();
    let prof = Profile::h32(2);
    for (name, par) in MODES {
        group.bench_function(name, |b| b.iter(|| prof.sample_with(black_box(&g), par)));
    }
    group.finish();
}

criterion_group!(benches, psor, variable_coefficients, weiss_ladder, sampling);
criterion_main!(benches);
