use chb_core::potentials::*;
use chb_core::ChbError;
use proptest::prelude::*;

fn graphs() -> Vec<MonotoneGraph> {
    vec![
        MonotoneGraph::Obstacle,
        MonotoneGraph::LogDerivative { theta: 1.0 },
        MonotoneGraph::Cubic { alpha: 1.0 },
    ]
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn graph_strategy() -> impl Strategy<Value = MonotoneGraph> {
    prop_oneof![
        (0.1f64..5.0).prop_map(|alpha| MonotoneGraph::Cubic { alpha }),
        (0.1f64..3.0).prop_map(|theta| MonotoneGraph::LogDerivative { theta }),
        (0.1f64..5.0).prop_map(|slope| MonotoneGraph::Linear { slope }),
        Just(MonotoneGraph::Obstacle),
    ]
}

proptest! {
    #[test]
    fn resolvent_solves_inclusion(g in graph_strategy(), eps in 1e-4f64..0.99, r in -5.0f64..5.0) {
        let y = YosidaGraph::new(g.clone(), eps).unwrap();
        let j = y.resolvent(r).unwrap();
        prop_assert!(g.domain().contains(j));
        match g {
            MonotoneGraph::Obstacle => prop_assert_eq!(j, r.clamp(-1.0, 1.0)),
            _ => {
                let h = |y: f64| match g.min_section(y) {
                    Some(b) if g.domain().contains_in_interior(y) => y + eps * b - r,
                    _ => if y > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                };
                let tol = 1e-12 * r.abs().max(1.0);
                // a root closer to the domain edge than one ulp is bracketed by neighbouring floats
                let (below, above) = (j - 4.0 * f64::EPSILON * j.abs(), j + 4.0 * f64::EPSILON * j.abs());
                prop_assert!(h(j).abs() <= tol || (h(below) <= 0.0 && h(above) >= 0.0), "residual {}", h(j));
            }
        }
    }

    #[test]
    fn yosida_is_monotone_and_lipschitz(g in graph_strategy(), eps in 1e-3f64..0.99, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let y = YosidaGraph::new(g, eps).unwrap();
        let (ya, yb) = (y.yosida(a).unwrap(), y.yosida(b).unwrap());
        prop_assert!((ya - yb) * (a - b) >= 0.0);
        prop_assert!((ya - yb).abs() <= (a - b).abs() / eps * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn yosida_bounded_by_minimal_section(g in graph_strategy(), eps in 1e-3f64..0.99, r in -0.999f64..0.999) {
        let y = YosidaGraph::new(g.clone(), eps).unwrap();
        let b0 = g.min_section(r).unwrap();
        prop_assert!(y.yosida(r).unwrap().abs() <= b0.abs() * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn envelope_is_primitive_of_yosida(g in graph_strategy(), eps in 0.01f64..0.99, r in -2.0f64..2.0) {
        let y = YosidaGraph::new(g, eps).unwrap();
        // composite Simpson on [0, r], split where beta_eps has kinks
        let mut cuts = vec![0.0];
        cuts.extend([-1.0, 1.0].into_iter().filter(|c: &f64| c / r > 0.0 && c.abs() < r.abs()));
        cuts.push(r);
        let simpson = |a: f64, b: f64| {
            let n = 2000;
            let h = (b - a) / n as f64;
            let mut s = y.yosida(a).unwrap() + y.yosida(b).unwrap();
            for k in 1..n {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                s += w * y.yosida(a + k as f64 * h).unwrap();
            }
            s * h / 3.0
        };
        let integral: f64 = cuts.windows(2).map(|w| simpson(w[0], w[1])).sum();
        prop_assert!((integral - y.moreau_envelope(r).unwrap()).abs() <= 1e-8, "{integral}");
    }

    #[test]
    fn polynomial_derivatives_match_differences(alpha in 0.1f64..5.0, r in -2.0f64..2.0) {
        let p = Potential::Polynomial { alpha };
        let h = 1e-5;
        let fd = (p.value(r + h).unwrap() - p.value(r - h).unwrap()) / (2.0 * h);
        prop_assert!((fd - p.derivative(r).unwrap()).abs() <= 1e-7 * alpha.max(1.0) * 10.0);
        let fd2 = (p.derivative(r + h).unwrap() - p.derivative(r - h).unwrap()) / (2.0 * h);
        prop_assert!((fd2 - p.second_derivative(r).unwrap()).abs() <= 1e-6 * alpha.max(1.0) * 10.0);
    }
}

#[test]
fn spec_examples_for_resolvent_and_envelope() {
    let lin = YosidaGraph::new(MonotoneGraph::Linear { slope: 1.0 }, 0.5).unwrap();
    assert!((lin.moreau_envelope(2.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    let obs = YosidaGraph::new(MonotoneGraph::Obstacle, 0.5).unwrap();
    assert_eq!(obs.resolvent(2.0).unwrap(), 1.0);
    assert_eq!(obs.yosida(2.0).unwrap(), 2.0);
    assert_eq!(obs.moreau_envelope(2.0).unwrap(), 1.0);
    for g in graphs() {
        let y = YosidaGraph::new(g, 0.3).unwrap();
        assert_eq!(y.moreau_envelope(0.0).unwrap(), 0.0);
        assert_eq!(y.yosida(0.0).unwrap(), 0.0);
    }
}

#[test]
fn yosida_property_suite_holds() {
    let samples = grid(-2.0, 2.0, 1000);
    let eps = eps_schedule(10);
    for g in graphs() {
        let rep = yosida_properties(&g, &eps, &samples).unwrap();
        assert!(rep.pass(1e-12, 1e-9), "{g:?}: {rep:?}");
    }
}

#[test]
fn envelope_increases_to_primitive() {
    let g = MonotoneGraph::LogDerivative { theta: 1.0 };
    let r = 0.9;
    let gaps: Vec<f64> = eps_schedule(12)
        .iter()
        .map(|&e| g.primitive(r) - YosidaGraph::new(g.clone(), e).unwrap().moreau_envelope(r).unwrap())
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]));
    assert!(*gaps.last().unwrap() < 1e-3);
}

#[test]
fn cubic_bulk_dominated_by_log_surface() {
    let samples = grid(-0.99, 0.99, 1000);
    let bulk = MonotoneGraph::Cubic { alpha: 1.0 };
    let surf = MonotoneGraph::LogDerivative { theta: 1.0 };
    assert!(check_domination(&bulk, &surf, None, &samples, 1.0, 1.0).unwrap().pass);
    for e in eps_schedule(10) {
        assert!(check_domination(&bulk, &surf, Some(e), &grid(-2.0, 2.0, 1000), 1.0, 1.0).unwrap().pass);
    }
}

#[test]
fn log_bulk_not_dominated_by_polynomial_surface() {
    let samples = grid(-0.999, 0.999, 1000);
    let bulk = MonotoneGraph::LogDerivative { theta: 1.0 };
    let surf = MonotoneGraph::Cubic { alpha: 1.0 };
    let rep = check_domination(&bulk, &surf, None, &samples, 1.0, 1.0).unwrap();
    assert!(!rep.pass);
    assert!(rep.worst_sample.unwrap().abs() >= 0.99);
    let pair = PotentialPair {
        bulk: Potential::Logarithmic { theta: 1.0, theta_c: 2.0 },
        surface: Potential::Polynomial { alpha: 1.0 },
    };
    let err = validate_domination(&pair, &samples, 1.0, 1.0).unwrap_err();
    assert!(matches!(err, ChbError::Assumption { .. }));
    assert!(err.to_string().contains("boundary graph dominates the bulk graph"));
}

#[test]
fn domination_transfers_to_yosida_approximations() {
    let samples = grid(-2.0, 2.0, 1000);
    let gs = graphs();
    for b in &gs {
        for s in &gs {
            let base = check_domination(b, s, None, &samples, 1.0, 1.0).unwrap();
            if !base.pass {
                continue;
            }
            for e in eps_schedule(10) {
                let rep = check_domination(b, s, Some(e), &samples, 1.0, 1.0).unwrap();
                assert!(rep.pass, "{b:?} / {s:?} eps {e}: {rep:?}");
            }
        }
    }
}

#[test]
fn coercivity_constant_is_bounded() {
    let grid = grid(-10.0, 10.0, 2001);
    for g in graphs() {
        let cs: Vec<f64> = [0.5, 0.1, 0.01, 1e-3]
            .iter()
            .map(|&e| coercivity_constant(&g, e, &grid).unwrap())
            .collect();
        let small = &cs[1..];
        assert!(small.iter().all(|c| c.is_finite()), "{g:?}: {cs:?}");
        assert!(small.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{g:?}: {cs:?}");
    }
}
