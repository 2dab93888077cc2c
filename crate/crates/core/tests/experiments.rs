use chb_core::brinkman::CoefficientFn;
use chb_core::cahnhilliard::FieldInit;
use chb_core::config::RunConfig;
use chb_core::experiments::*;
use chb_core::{Assumption, ChbError};

fn tiny(extra: &str) -> RunSpec {
    let text = format!("domain.n = 4\ntime.dt = 1e-3\ntime.T = 3e-3\ninit.phi = noise:0,0.5\nseed = 2\n{extra}");
    RunConfig::parse(&text, None).unwrap().spec
}

#[test]
fn loglog_fit_recovers_power_law() {
    let x = [1e-1, 1e-2, 1e-3, 1e-4];
    let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.5)).collect();
    let f = loglog_fit(&x, &y).unwrap();
    assert!((f.slope - 0.5).abs() < 1e-12);
    assert!(f.residual < 1e-12);
    assert_eq!(f.points, 4);
    assert!(loglog_fit(&x[..3], &y[..3]).is_err());
    assert!(loglog_fit(&x, &[1.0, 0.0, 1.0, 1.0]).is_err());
}

#[test]
fn degenerate_k_lists_rejected() {
    let base = tiny("");
    for ks in [vec![0.1, 0.01, 0.001], vec![0.1, 0.1, 0.01, 0.001], vec![0.1, 0.01, -1.0, 1e-4], vec![1e-4, 1e-3, 1e-2, 1e-1]] {
        assert!(matches!(sweep_k(&base, &ks, true, None), Err(ChbError::Config(_))), "{ks:?}");
    }
}

#[test]
fn k_sweep_writes_tables_and_zero_run_matches_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let res = sweep_k(&tiny("coeffs.gamma = 0.5\n"), &[1e-1, 1e-2, 1e-3, 1e-4], true, Some(dir.path())).unwrap();
    assert_eq!(res.rows.len(), 5);
    assert_eq!(res.rows.last().unwrap().param, 0.0);
    assert_eq!(res.column("sup_mismatch").unwrap().last().copied(), Some(0.0));
    assert!(res.fit.is_some());
    res.write(dir.path()).unwrap();
    for f in ["summary.csv", "fit.csv", "checks.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(dir.path().join("run_K_1e-1").join("timeseries.csv").exists());
}

#[test]
fn eps_sweep_needs_singular_mode() {
    let base = tiny("");
    assert!(sweep_eps(&base, &[0.125, 0.0625, 0.03125, 0.015625], None).is_err());
}

#[test]
fn stability_rejects_non_constant_coefficients() {
    let mut base = tiny("");
    base.model.coeffs.nu = CoefficientFn::ClampedAffine { a: 1.0, b: 0.5, lo: 0.5, hi: 2.0 };
    let err = stability_experiment(&base, &[1e-2, 5e-3, 2.5e-3], &FieldInit::Const(1.0), None).unwrap_err();
    assert!(matches!(err, ChbError::Assumption { assumption: Assumption::ConstantCoefficients, .. }), "{err}");
}

#[test]
fn stability_skips_zero_delta() {
    let base = tiny("");
    let eta = FieldInit::Cos { amp: 1.0, kx: 1.0, ky: 1.0, offset: 0.0 };
    let res = stability_experiment(&base, &[1e-2, 5e-3, 0.0, 2.5e-3], &eta, None).unwrap();
    assert_eq!(res.rows.len(), 3);
    assert!(res.rows.iter().all(|r| r.param > 0.0));
    assert!(stability_experiment(&base, &[1e-2, 0.0, 5e-3], &eta, None).is_err());
}

#[test]
fn dispersion_relation_signs() {
    // F''(0) = -20: k = 1 grows, k = 2 decays
    assert!(dispersion_rate(1.0, -20.0, 1.0) > 0.0);
    assert!(dispersion_rate(1.0, -20.0, 2.0) < 0.0);
    assert_eq!(dispersion_rate(1.0, -(std::f64::consts::PI).powi(2), 1.0), 0.0);
}

#[test]
fn spinodal_requires_constant_mobility() {
    let mut base = tiny("");
    base.model.coeffs.m_bulk = CoefficientFn::ClampedAffine { a: 1.0, b: 0.5, lo: 0.5, hi: 2.0 };
    assert!(spinodal(&base, &[1.0, 2.0], 1e-4, None).is_err());
}
