use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use metawave_bench::{lossy_eps1, square};
use metawave_core::*;

fn coefficients(c: &mut Criterion) {
    let p = SlabParams::normalized(12.0, 0.5, 0.75, Complex64::new(1.736, 0.0));
    c.bench_function("closed_form_coeffs", |b| {
        b.iter(|| closed_form_coeffs(GeometryId::Sigma1, black_box(&p)).unwrap())
    });
    c.bench_function("interface_matching_oracle", |b| {
        let (a, k) = layer_parameters(GeometryId::Sigma1, &p).unwrap();
        b.iter(|| interface_matching_oracle(black_box(a), black_box(k), 12.0, 0.5).unwrap())
    });
}

fn cells(c: &mut Criterion) {
    let mut group = c.benchmark_group("cell");
    for n in [32usize, 64] {
        let cell = build_cell_mesh(&square(GeometryId::Sigma1), n).unwrap();
        group.bench_with_input(BenchmarkId::new("permittivity", n), &cell, |b, cell| {
            b.iter(|| solve_pc_permittivity(cell).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("neumann", n), &cell, |b, cell| {
            b.iter(|| solve_neumann_cell(cell).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("inclusion_corrector", n), &cell, |b, cell| {
            b.iter(|| solve_inclusion_resonance(cell, 12.0, 1.0, 1.0, lossy_eps1()).unwrap())
        });
    }
    group.finish();
}

fn domain_solves(c: &mut Criterion) {
    let mut group = c.benchmark_group("domain");
    group.sample_size(10);
    let wave = IncidentWave::from_right(12.0).unwrap();
    let opts = SolveOptions {
        lateral: LateralBoundary::Periodic,
    };
    let domain = MacroDomain::default();
    for cpe in [16usize, 32] {
        let mesh = Arc::new(build_domain_mesh(&domain, &square(GeometryId::Sigma1), cpe).unwrap());
        group.bench_with_input(BenchmarkId::new("h_parallel", cpe), &mesh, |b, mesh| {
            b.iter(|| assemble_and_solve(mesh, Mode::HParallel, lossy_eps1(), &wave, opts).unwrap())
        });
    }
    let macro_mesh = Arc::new(build_macro_mesh(&domain, 32).unwrap());
    let (model, _) = HomogenizedModel::from_cell(&square(GeometryId::Sigma1), 64, 12.0, lossy_eps1()).unwrap();
    group.bench_function("homogenized_32", |b| {
        b.iter(|| homogenized_solve(&macro_mesh, &model, &wave, opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, coefficients, cells, domain_solves);
criterion_main!(benches);
