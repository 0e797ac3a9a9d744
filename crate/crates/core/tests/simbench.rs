use cvxsim::simbench::{coverage_experiment, generate, qq_experiment, Design, ModelSpec};
use cvxsim::{EstimatorConfig, EstimatorKind};

fn plse() -> EstimatorConfig {
    EstimatorConfig::new(EstimatorKind::Plse { lambda: None })
}

#[test]
fn quad3_noise_level() {
    let (data, theta0) = generate(&ModelSpec::new(Design::Quad3, 10_000, 1)).unwrap();
    let norm: f64 = theta0.as_slice().iter().map(|v| v * v).sum();
    assert!((norm - 1.0).abs() < 1e-14);
    let proj = data.project(&theta0);
    let resid: Vec<f64> = proj.iter().zip(data.y().iter()).map(|(u, y)| y - u * u).collect();
    let mean = resid.iter().sum::<f64>() / resid.len() as f64;
    let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (resid.len() - 1) as f64;
    assert!((var.sqrt() - 0.3).abs() <= 0.02, "sd {}", var.sqrt());
}

#[test]
fn absdep_binary_covariate_variance() {
    let (data, _) = generate(&ModelSpec::new(Design::AbsDep, 100_000, 2)).unwrap();
    let col: Vec<f64> = data.x().column(4).iter().copied().collect();
    assert!(col.iter().all(|v| *v == 0.0 || *v == 1.0));
    let n = col.len() as f64;
    let p = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - p).powi(2)).sum::<f64>() / n;
    // P(X₅ = 1) = E[logistic(U)] = 1/2 for U ~ U[−1, 1] by symmetry.
    assert!((var - 0.25).abs() <= 0.01, "var {var}");
    assert!((var - p * (1.0 - p)).abs() < 1e-12);
}

#[test]
fn generation_is_deterministic() {
    for design in [Design::Quad3, Design::QuadD { dim: 7 }, Design::Quad4Robust, Design::Quad5Simple, Design::AbsDep] {
        let spec = ModelSpec::new(design, 200, 42);
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.y(), b.y());
        let (c, _) = generate(&spec.with_seed(43)).unwrap();
        assert_ne!(a.y(), c.y());
    }
}

#[test]
fn coverage_tends_to_one_as_level_grows() {
    let spec = ModelSpec::new(Design::Quad3, 100, 5);
    let wide = coverage_experiment(&spec, &plse(), 100, 1.0 - 1e-9).unwrap();
    assert!(wide.failures <= 5);
    assert!(wide.coverage.iter().all(|c| *c >= 0.99), "{:?}", wide.coverage);
    let narrow = coverage_experiment(&spec, &plse(), 100, 0.5).unwrap();
    for (w, n) in wide.avg_length.iter().zip(&narrow.avg_length) {
        assert!(w > n);
    }
}

#[test]
fn experiments_are_reproducible_by_replication() {
    let spec = ModelSpec::new(Design::Quad3, 80, 6);
    let a = coverage_experiment(&spec, &plse(), 12, 0.95).unwrap();
    let b = coverage_experiment(&spec, &plse(), 12, 0.95).unwrap();
    let c = coverage_experiment(&spec, &plse(), 5, 0.95).unwrap();
    assert_eq!(serde_json::to_string(&a.replications).unwrap(), serde_json::to_string(&b.replications).unwrap());
    assert_eq!(a.coverage, b.coverage);
    // A prefix of replications does not depend on how many are run.
    assert_eq!(serde_json::to_string(&a.replications[..5]).unwrap(), serde_json::to_string(&c.replications).unwrap());
}

#[test]
fn qq_rows_and_centering() {
    let spec = ModelSpec::new(Design::Quad3, 100, 7);
    let reps = 40;
    let q = qq_experiment(&spec, &plse(), reps, &[100, 200]).unwrap();
    assert_eq!(q.rows.len() + q.failures, reps * 2);
    for &(n, var) in &q.variance {
        let errs: Vec<f64> = q.rows.iter().filter(|r| r.n == n).map(|r| r.sqrt_n_err).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!(mean.abs() <= 3.0 * (var / errs.len() as f64).sqrt(), "n={n} mean {mean} var {var}");
    }
}
