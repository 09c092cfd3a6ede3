use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use hamlab_bench::{negative_curvature, surfaces};
use hamlab_core::hyperbolicity::OrbitCurvature;
use hamlab_core::jacobi::bracket_curvature;
use hamlab_core::reduction::local_reduced_curvature;
use hamlab_core::riccati::{fundamental, limit_riccati, Direction, RiccatiProblem};
use hamlab_core::symplectic::{uniform_grid, PhaseSystem};

fn pointwise(c: &mut Criterion) {
    let mut g = c.benchmark_group("pointwise");
    for (m, a) in surfaces() {
        let z = a.z.as_slice();
        g.bench_with_input(BenchmarkId::new("bracket_curvature", m.name()), z, |b, z| {
            b.iter(|| bracket_curvature(&m, black_box(z)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("local_reduced_curvature", m.name()), z, |b, z| {
            b.iter(|| local_reduced_curvature(&m, black_box(z), None).unwrap())
        });
    }
    g.finish();
}

fn along_orbit(c: &mut Criterion) {
    let mut g = c.benchmark_group("orbit");
    g.sample_size(10);
    for (m, a) in surfaces() {
        g.bench_function(BenchmarkId::new("table_to_t10", m.name()), |b| {
            b.iter(|| {
                let table = OrbitCurvature::new(&m, &a).unwrap();
                table.at(black_box(10.0)).unwrap()
            })
        });
    }
    g.finish();
}

fn riccati(c: &mut Criterion) {
    let mut g = c.benchmark_group("riccati");
    let grid = uniform_grid(0.0, 5.0, 51);
    for m in [1, 2, 4] {
        let problem = RiccatiProblem::constant(negative_curvature(m));
        g.bench_with_input(BenchmarkId::new("fundamental", m), &problem, |b, p| b.iter(|| fundamental(p, &grid).unwrap()));
        g.bench_with_input(BenchmarkId::new("limit_plus", m), &problem, |b, p| {
            b.iter(|| limit_riccati(p, Direction::Plus, &[0.0], 1e-8).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, pointwise, along_orbit, riccati);
criterion_main!(benches);
