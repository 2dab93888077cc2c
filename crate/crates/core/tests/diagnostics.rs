use chb_core::brinkman::{CoefficientFn, Coefficients};
use chb_core::cahnhilliard::*;
use chb_core::diagnostics::*;
use chb_core::fem::{TRI_QUAD_7, SEG_QUAD_3};
use chb_core::potentials::{Potential, SchemePotential};

fn cfg(k: f64) -> ModelConfig {
    ModelConfig {
        k,
        bulk: SchemePotential::regular(Potential::Polynomial { alpha: 1.0 }).unwrap(),
        surface: SchemePotential::regular(Potential::Polynomial { alpha: 1.0 }).unwrap(),
        coeffs: Coefficients {
            gamma: CoefficientFn::Constant(0.5),
            ..Coefficients::default()
        },
        dt: 1e-3,
        t_final: 1e-3,
        newton_tol: 1e-10,
        newton_max_iter: 30,
        scheme: Scheme::Coupled,
        max_halvings: 3,
    }
}

fn state(disc: &Discretization, c: &ModelConfig, phi: Vec<f64>, psi: Vec<f64>) -> FieldState {
    state_from_phase(disc, c, 0.0, phi, psi).unwrap()
}

fn bulk_field(disc: &Discretization, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    disc.mesh.bulk.node_coords.iter().map(|p| f(p[0], p[1])).collect()
}

#[test]
fn constant_states_have_known_energy() {
    let disc = Discretization::new(8).unwrap();
    let c = cfg(0.1);
    let nb = disc.n_bulk();
    let ns = disc.n_surface();
    let zero = energy(&disc, &c, &state(&disc, &c, vec![0.0; nb], vec![0.0; ns])).unwrap();
    let g0 = Potential::Polynomial { alpha: 1.0 }.value(0.0).unwrap();
    assert!((zero.total - (disc.area() * 0.25 + disc.perimeter() * g0)).abs() < 1e-13);
    assert_eq!(zero.robin, 0.0);
    let one = energy(&disc, &c, &state(&disc, &c, vec![1.0; nb], vec![1.0; ns])).unwrap();
    assert!(one.total.abs() < 1e-15);
    let sum = zero.bulk_grad + zero.bulk_pot + zero.surf_grad + zero.surf_pot + zero.robin;
    assert!((sum - zero.total).abs() <= 1e-13 * zero.total.abs());
}

#[test]
fn smooth_field_energy_matches_refined_quadrature() {
    let disc = Discretization::new(32).unwrap();
    let c = cfg(0.5);
    let phi = bulk_field(&disc, |x, y| 0.8 * (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos());
    let psi: Vec<f64> = disc.trace(&phi).iter().map(|v| 0.9 * v + 0.05).collect();
    let s = state(&disc, &c, phi.clone(), psi.clone());
    let e = energy(&disc, &c, &s).unwrap();
    let f = |r: f64| Potential::Polynomial { alpha: 1.0 }.value(r).unwrap();
    let bulk = &disc.mesh.bulk;
    let mut bulk_pot = 0.0;
    for (t, tri) in bulk.triangles.iter().enumerate() {
        let area = bulk.signed_area(t).abs();
        for q in TRI_QUAD_7.iter() {
            let v: f64 = (0..3).map(|i| q.0[i] * phi[tri[i]]).sum();
            bulk_pot += q.1 * area * f(v);
        }
    }
    let surf = &disc.mesh.surface;
    let mut surf_pot = 0.0;
    for k in 0..surf.n_nodes() {
        let (a, b) = (psi[k], psi[surf.next(k)]);
        for &(s, w) in SEG_QUAD_3.iter() {
            surf_pot += w * surf.segment_lengths[k] * f((1.0 - s) * a + s * b);
        }
    }
    assert!((e.bulk_pot - bulk_pot).abs() <= 1e-6);
    assert!((e.surf_pot - surf_pot).abs() <= 1e-6);
}

#[test]
fn dirichlet_coupling_has_no_mismatch_and_no_robin_energy() {
    let disc = Discretization::new(6).unwrap();
    let c = cfg(0.0);
    let phi = bulk_field(&disc, |x, y| x - y * y);
    let psi = disc.trace(&phi);
    let s = state(&disc, &c, phi, psi);
    assert_eq!(boundary_mismatch(&disc, &s), 0.0);
    assert_eq!(energy(&disc, &c, &s).unwrap().robin, 0.0);
}

#[test]
fn constant_offset_mismatch() {
    let disc = Discretization::new(8).unwrap();
    let c = cfg(0.1);
    let phi = bulk_field(&disc, |x, y| (3.0 * x).sin() * y);
    let off = 0.3;
    let psi: Vec<f64> = disc.trace(&phi).iter().map(|v| v + off).collect();
    let s = state(&disc, &c, phi, psi);
    assert!((boundary_mismatch(&disc, &s) - off * disc.perimeter().sqrt()).abs() < 1e-14);
}

#[test]
fn robin_energy_decreases_with_k() {
    let disc = Discretization::new(8).unwrap();
    let phi = bulk_field(&disc, |x, y| x * y);
    let psi: Vec<f64> = disc.trace(&phi).iter().map(|v| v - 0.2).collect();
    let ks = [1e-3, 1e-2, 0.1, 1.0, 10.0];
    let robin: Vec<f64> = ks
        .iter()
        .map(|&k| {
            let c = cfg(k);
            let s = state(&disc, &c, phi.clone(), psi.clone());
            energy(&disc, &c, &s).unwrap().robin
        })
        .collect();
    assert!(robin.windows(2).all(|w| w[0] > w[1]), "{robin:?}");
}

#[test]
fn stability_norms_of_constant_shift() {
    let disc = Discretization::new(8).unwrap();
    let c = cfg(0.1);
    let phi = bulk_field(&disc, |x, y| 0.3 * x - 0.1 * y);
    let psi = disc.trace(&phi);
    let a = state(&disc, &c, phi.clone(), psi.clone());
    let same = stability_norms(&disc, &a, &a).unwrap();
    assert_eq!(same.combined(), 0.0);
    let mut b = a.clone();
    let shift = 0.25;
    b.phi.iter_mut().for_each(|v| *v += shift);
    let d = stability_norms(&disc, &a, &b).unwrap();
    assert!((d.phi - shift * disc.area().sqrt()).abs() < 1e-14);
    assert_eq!((d.psi, d.mu, d.theta, d.v), (0.0, 0.0, 0.0, 0.0));
    let mut short = a.clone();
    short.phi.pop();
    assert!(stability_norms(&disc, &short, &a).is_err());
}

#[test]
fn contact_angles_of_planar_interfaces() {
    let disc = Discretization::new(16).unwrap();
    let c = cfg(0.1);
    let mk = |f: &dyn Fn(f64, f64) -> f64| {
        let phi = bulk_field(&disc, f);
        let psi = disc.trace(&phi);
        state(&disc, &c, phi, psi)
    };
    let vertical = contact_angle(&disc, &mk(&|x, _| x - 0.5));
    assert_eq!(vertical.len(), 2);
    assert!(vertical.iter().all(|(_, a)| (a - 90.0).abs() <= 0.5), "{vertical:?}");

    let tilted = contact_angle(&disc, &mk(&|x, y| (x - 0.5) + 0.2 * (y - 0.5)));
    assert_eq!(tilted.len(), 2);
    let expect = 90.0 + 0.2f64.atan().to_degrees();
    let mut angles: Vec<f64> = tilted.iter().map(|p| p.1).collect();
    angles.sort_by(f64::total_cmp);
    assert!((angles[1] - expect).abs() <= 1.0, "{tilted:?}");
    assert!((angles[0] - (180.0 - expect)).abs() <= 1.0, "{tilted:?}");

    assert!(contact_angle(&disc, &mk(&|_, _| 0.3)).is_empty());
}

#[test]
fn uniform_state_balance_is_zero() {
    let sim = Simulator::new(4, cfg(0.1)).unwrap();
    let s0 = sim
        .initial_state(&InitialData { phi: FieldInit::Const(0.2), psi: SurfaceInit::Trace, seed: 0 })
        .unwrap();
    let out = sim.step(&s0).unwrap();
    let chk = dissipation_check(&sim.disc, &sim.cfg, &s0, &out.state, sim.cfg.dt).unwrap();
    assert!(chk.energy_change.abs() < 1e-14);
    assert!(chk.dissipation.total().abs() < 1e-14, "{:?}", chk.dissipation);
}

#[test]
fn balance_residual_shrinks_with_dt() {
    let mut res = Vec::new();
    for dt in [2e-3, 1e-3] {
        let mut c = cfg(0.1);
        c.dt = dt;
        c.t_final = dt;
        let sim = Simulator::new(8, c).unwrap();
        let init = InitialData {
            phi: FieldInit::Cos { amp: 0.4, kx: 1.0, ky: 1.0, offset: 0.0 },
            psi: SurfaceInit::Trace,
            seed: 0,
        };
        let s0 = sim.initial_state(&init).unwrap();
        let out = sim.step(&s0).unwrap();
        let chk = dissipation_check(&sim.disc, &sim.cfg, &s0, &out.state, dt).unwrap();
        res.push(chk.residual);
    }
    assert!(res.iter().all(|r| *r <= 0.0));
    let ratio = res[1] / res[0];
    assert!(ratio > 0.3 && ratio < 0.7, "{res:?}");
}
