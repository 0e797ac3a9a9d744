//! Benchmarks of the numerical kernels and a full fit.

use criterion::{black_box, BenchmarkId, Criterion};
use nalgebra::DMatrix;

use cvxsim::affine_link::{fit_convex, fit_lipschitz};
use cvxsim::qp::{ldp, nnls, RowMatrix, DEFAULT_NNLS_TOL};
use cvxsim::rng::SimRng;
use cvxsim::simbench::{generate, Design, ModelSpec};
use cvxsim::spline_link::{fit_penalized, SplineOptions};
use cvxsim::stiefel::{descend_theta, DescentOptions};
use cvxsim::{fit, project_and_bin, EstimatorConfig, EstimatorKind, SortedProjection};

fn bins(m: usize, seed: u64) -> SortedProjection {
    let mut rng = SimRng::new(seed);
    let mut t: Vec<f64> = (0..m).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    let y = t.iter().map(|s| s * s + 0.3 * rng.standard_normal()).collect();
    SortedProjection::unweighted(t, y).unwrap()
}

/// Random `G` and a right-hand side `h ≤ G z₀`, so that `G z ≥ h` is feasible.
fn dense_qp(rows: usize, cols: usize) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = SimRng::new(1);
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.standard_normal());
    let z0 = nalgebra::DVector::from_fn(cols, |_, _| rng.standard_normal());
    let gz = &g * z0;
    let h = gz.iter().map(|v| v - rng.standard_normal().abs()).collect();
    (g, h)
}

pub fn benchmarks(c: &mut Criterion) {
    let mut group = c.benchmark_group("qp");
    for size in [20, 60] {
        let (e, f) = dense_qp(size + 10, size);
        group.bench_with_input(BenchmarkId::new("nnls", size), &size, |b, _| {
            b.iter(|| nnls(black_box(&e), black_box(&f), DEFAULT_NNLS_TOL).unwrap())
        });
        let (g, h) = dense_qp(size, size / 2);
        let rows = RowMatrix::from_dense(&g);
        group.bench_with_input(BenchmarkId::new("ldp", size), &size, |b, _| {
            b.iter(|| ldp(black_box(&rows), black_box(&h)).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("link");
    for m in [100, 500] {
        let proj = bins(m, 2);
        group.bench_with_input(BenchmarkId::new("convex", m), &m, |b, _| b.iter(|| fit_convex(black_box(&proj)).unwrap()));
        group.bench_with_input(BenchmarkId::new("lipschitz", m), &m, |b, _| {
            b.iter(|| fit_lipschitz(black_box(&proj), 1.0).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("spline", m), &m, |b, _| {
            b.iter(|| fit_penalized(black_box(&proj), 0.01, &SplineOptions::default()).unwrap())
        });
    }
    group.finish();

    let (data, theta0) = generate(&ModelSpec::new(Design::Quad3, 500, 3)).unwrap();
    let proj = project_and_bin(&data, &theta0, 1e-6).unwrap();
    let link = fit_penalized(&proj, 0.01, &SplineOptions::default()).unwrap();
    c.bench_function("descend_theta/500", |b| {
        b.iter(|| descend_theta(black_box(&data), &link, &theta0, &DescentOptions::default()).unwrap())
    });

    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    for kind in [EstimatorKind::Plse { lambda: None }, EstimatorKind::Llse { lipschitz: 4.0 }] {
        let cfg = EstimatorConfig::new(kind);
        group.bench_function(kind.name(), |b| b.iter(|| fit(black_box(&data), &cfg).unwrap()));
    }
    group.finish();
}
