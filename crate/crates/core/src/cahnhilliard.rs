//! Time stepping of the convective bulk-surface Cahn-Hilliard system coupled
//! to the Brinkman flow.
//!
//! Backward Euler in time; the convex part of each potential is implicit and
//! the concave remainder explicit. With [`Scheme::Coupled`] the velocity,
//! pressure and all four phase unknowns at the new level are found in one
//! Newton solve, with coefficients and capillary coupling matrices frozen at
//! the old level. [`Scheme::Lagged`] solves the flow from the old fields first
//! and then treats convection explicitly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::brinkman::{assemble_flow_operators, BrinkmanSolver, Coefficients, FlowOperators, FlowSolution};
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Assumption, ChbError, Result};
use crate::fem::{bulk_quad, surface_quad, Quad, VelocitySpace};
use crate::geometry::{Mesh, Point};
use crate::potentials::{MonotoneGraph, SchemePotential};
use crate::sparse::{dot, norm_inf, CsrMatrix, SparseLu, TripletBuilder};

/// Mesh, function spaces and the state-independent matrices.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub space: VelocitySpace,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub surf_mass: CsrMatrix,
    pub surf_stiffness: CsrMatrix,
    /// Quadratic velocity mass matrix over the free dofs.
    pub velocity_mass: CsrMatrix,
    pub bulk_quad: Quad<3>,
    pub surf_quad: Quad<2>,
    /// Row sums of the mass matrices (`int chi_i`).
    pub bulk_weights: Vec<f64>,
    pub surf_weights: Vec<f64>,
}

impl Discretization {
    pub fn new(n: usize) -> Result<Self> {
        Self::from_mesh(Mesh::unit_square(n)?)
    }

    pub fn from_mesh(mesh: Mesh) -> Result<Self> {
        let space = VelocitySpace::new(&mesh);
        let mass = mesh.bulk.mass_matrix();
        let stiffness = mesh.bulk.stiffness_matrix();
        let surf_mass = mesh.surface.mass_matrix();
        let surf_stiffness = mesh.surface.stiffness_matrix()?;
        let bulk_weights = mass.row_sums();
        let surf_weights = surf_mass.row_sums();
        let unit = Coefficients {
            lambda: crate::brinkman::CoefficientFn::Constant(1.0),
            ..Coefficients::default()
        };
        let velocity_mass = assemble_flow_operators(
            &mesh,
            &space,
            &vec![0.0; mesh.n_bulk()],
            &vec![0.0; mesh.n_surface()],
            &unit,
        )?
        .permeability;
        Ok(Self {
            velocity_mass,
            bulk_quad: bulk_quad(&mesh),
            surf_quad: surface_quad(&mesh),
            mesh,
            space,
            mass,
            stiffness,
            surf_mass,
            surf_stiffness,
            bulk_weights,
            surf_weights,
        })
    }

    pub fn n_bulk(&self) -> usize {
        self.mesh.n_bulk()
    }

    pub fn n_surface(&self) -> usize {
        self.mesh.n_surface()
    }

    pub fn area(&self) -> f64 {
        self.mesh.bulk.area()
    }

    pub fn perimeter(&self) -> f64 {
        self.mesh.surface.length()
    }

    pub fn bulk_mass(&self, phi: &[f64]) -> f64 {
        dot(&self.bulk_weights, phi)
    }

    pub fn surface_mass(&self, psi: &[f64]) -> f64 {
        dot(&self.surf_weights, psi)
    }

    pub fn trace(&self, phi: &[f64]) -> Vec<f64> {
        self.mesh.trace.forward.iter().map(|&b| phi[b]).collect()
    }

    /// `E^T s`: scatters a surface vector onto the bulk boundary nodes.
    pub fn scatter(&self, s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_bulk()];
        for (k, &b) in self.mesh.trace.forward.iter().enumerate() {
            out[b] += s[k];
        }
        out
    }

    /// P1 bulk stiffness weighted by the element mean of `m(phi)`.
    pub fn weighted_bulk_stiffness(&self, phi: &[f64], m: &crate::brinkman::CoefficientFn) -> Result<CsrMatrix> {
        let means = self
            .bulk_quad
            .cell_means(3, phi, |s| -> Result<f64> { Ok(m.eval(s)) })?;
        if let Some(bad) = means.iter().find(|v| !(**v > 0.0)) {
            return Err(ChbError::assumption(Assumption::Mobility, format!("M_Omega = {bad} at a quadrature point")));
        }
        Ok(self.mesh.bulk.weighted_stiffness(|e| means[e]))
    }

    pub fn weighted_surface_stiffness(&self, psi: &[f64], m: &crate::brinkman::CoefficientFn) -> Result<CsrMatrix> {
        let means = self
            .surf_quad
            .cell_means(2, psi, |s| -> Result<f64> { Ok(m.eval(s)) })?;
        if let Some(bad) = means.iter().find(|v| !(**v > 0.0)) {
            return Err(ChbError::assumption(Assumption::Mobility, format!("M_Gamma = {bad} at a quadrature point")));
        }
        self.mesh.surface.weighted_stiffness(|k| means[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Flow and phase fields solved together (discrete energy law holds exactly).
    Coupled,
    /// Flow from the old level, then the phase fields with explicit convection.
    Lagged,
}

/// Model parameters of one run.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    /// Robin relaxation parameter; 0 identifies the surface field with the trace.
    pub k: f64,
    pub bulk: SchemePotential,
    pub surface: SchemePotential,
    pub coeffs: Coefficients,
    pub dt: f64,
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub scheme: Scheme,
    /// Reject-and-halve depth in [`Simulator::run`].
    pub max_halvings: u32,
}

impl ModelConfig {
    /// `1/K` for `K > 0`, else 0.
    pub fn sigma(&self) -> f64 {
        sigma(self.k)
    }

    pub fn is_dirichlet(&self) -> bool {
        self.k == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(ChbError::Config(format!("K must be finite and >= 0, got {}", self.k)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ChbError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(ChbError::Config(format!("T must be >= 0, got {}", self.t_final)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(ChbError::Config("Newton tolerance and iteration cap must be positive".into()));
        }
        self.coeffs.validate()
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_final / self.dt) - 1e-9).ceil().max(0.0) as usize
    }
}

pub fn sigma(k: f64) -> f64 {
    if k > 0.0 {
        1.0 / k
    } else {
        0.0
    }
}

/// Nodal fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub mu: Vec<f64>,
    pub theta: Vec<f64>,
    pub flow: FlowSolution,
}

impl FieldState {
    pub fn is_finite(&self) -> bool {
        [&self.phi, &self.psi, &self.mu, &self.theta, &self.flow.velocity, &self.flow.pressure]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// SHA-256 over the bit patterns of every field.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.t.to_le_bytes());
        for v in [&self.phi, &self.psi, &self.mu, &self.theta, &self.flow.velocity, &self.flow.pressure] {
            h.update((v.len() as u64).to_le_bytes());
            for x in v.iter() {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Closed-form or random initial profile on the unit square.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldInit {
    Const(f64),
    /// `offset + amp cos(kx pi x) cos(ky pi y)`
    Cos { amp: f64, kx: f64, ky: f64, offset: f64 },
    /// `mean + U(-amp, amp)` per node, from the run seed.
    Noise { mean: f64, amp: f64 },
    /// `a (x - 1/2) + b (y - 1/2) + c`
    Plane { a: f64, b: f64, c: f64 },
    /// `clamp((x - x0)/w, -1, 1)`
    Step { x0: f64, w: f64 },
}

impl FieldInit {
    fn eval_det(&self, p: Point) -> Option<f64> {
        use std::f64::consts::PI;
        match *self {
            FieldInit::Const(c) => Some(c),
            FieldInit::Cos { amp, kx, ky, offset } => Some(offset + amp * (kx * PI * p[0]).cos() * (ky * PI * p[1]).cos()),
            FieldInit::Plane { a, b, c } => Some(a * (p[0] - 0.5) + b * (p[1] - 0.5) + c),
            FieldInit::Step { x0, w } => Some(((p[0] - x0) / w).clamp(-1.0, 1.0)),
            FieldInit::Noise { .. } => None,
        }
    }

    pub fn sample(&self, points: &[Point], rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            FieldInit::Noise { mean, amp } => points
                .iter()
                .map(|_| if amp > 0.0 { mean + rng.gen_range(-amp..=amp) } else { mean })
                .collect(),
            _ => points.iter().map(|&p| self.eval_det(p).unwrap()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceInit {
    /// `psi_0` is the trace of `phi_0`.
    Trace,
    Field(FieldInit),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub phi: FieldInit,
    pub psi: SurfaceInit,
    pub seed: u64,
}

/// Fails unless the mean lies in the interior of the graph domain.
fn check_interior_mean(mean: f64, sp: &SchemePotential, what: &str) -> Result<()> {
    if sp.yosida.is_none() {
        return Ok(());
    }
    let dom = sp.potential.convex_graph().domain();
    if !dom.contains_in_interior(mean) {
        return Err(ChbError::assumption(
            Assumption::InitialData,
            format!("{what} initial mean {mean} is not in the interior of D(beta) = ({}, {})", dom.lo, dom.hi),
        ));
    }
    Ok(())
}

/// Interpolates the initial profiles, checks the mean condition for singular
/// runs and computes consistent chemical potentials and flow.
pub fn project_initial_data(disc: &Discretization, cfg: &ModelConfig, init: &InitialData) -> Result<FieldState> {
    let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
    let phi = init.phi.sample(&disc.mesh.bulk.node_coords, &mut rng);
    let psi = if cfg.is_dirichlet() {
        disc.trace(&phi)
    } else {
        match &init.psi {
            SurfaceInit::Trace => disc.trace(&phi),
            SurfaceInit::Field(f) => f.sample(&disc.mesh.surface.coords, &mut rng),
        }
    };
    let m0 = disc.bulk_mass(&phi) / disc.area();
    let mg0 = disc.surface_mass(&psi) / disc.perimeter();
    check_interior_mean(m0, &cfg.bulk, "bulk")?;
    check_interior_mean(mg0, &cfg.surface, "surface")?;
    state_from_phase(disc, cfg, 0.0, phi, psi)
}

/// Completes `(phi, psi)` with chemical potentials solving the potential
/// relation and the flow they drive.
pub fn state_from_phase(disc: &Discretization, cfg: &ModelConfig, t: f64, phi: Vec<f64>, psi: Vec<f64>) -> Result<FieldState> {
    let sig = cfg.sigma();
    let bq = &disc.bulk_quad;
    let sq = &disc.surf_quad;
    let nb = disc.n_bulk();
    let ns = disc.n_surface();
    let mut rmu = disc.stiffness.mul_vec(&phi);
    let fb = bq.load(nb, &phi, |s| Ok::<_, ChbError>(cfg.bulk.convex_derivative(s)? + cfg.bulk.pi(s)))?;
    let mismatch: Vec<f64> = psi.iter().zip(disc.trace(&phi)).map(|(a, b)| a - b).collect();
    let rob = disc.surf_mass.mul_vec(&mismatch);
    let rob_b = disc.scatter(&rob);
    for i in 0..nb {
        rmu[i] += fb[i] - sig * rob_b[i];
    }
    let mut rth = disc.surf_stiffness.mul_vec(&psi);
    let fs = sq.load(ns, &psi, |s| Ok::<_, ChbError>(cfg.surface.convex_derivative(s)? + cfg.surface.pi(s)))?;
    for k in 0..ns {
        rth[k] += fs[k] + sig * rob[k];
    }
    let mu = solve_mass(&disc.mass, &rmu)?;
    let theta = solve_mass(&disc.surf_mass, &rth)?;
    let ops = assemble_flow_operators(&disc.mesh, &disc.space, &phi, &psi, &cfg.coeffs)?;
    let f = ops.capillary_rhs(&mu, &theta);
    let flow = BrinkmanSolver::new(ops)?.solve(&f)?;
    let st = FieldState { t, phi, psi, mu, theta, flow };
    if !st.is_finite() {
        return Err(ChbError::NonFinite("initial state".into()));
    }
    Ok(st)
}

fn solve_mass(m: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut t = TripletBuilder::new(m.nrows, m.ncols);
    t.add_block(m, 0, 0, 1.0);
    t.factorize()?.solve(rhs)
}

/// Unknown layout of one Newton system.
#[derive(Debug, Clone, Copy)]
struct Layout {
    nv: usize,
    np: usize,
    nb: usize,
    ns: usize,
    dirichlet: bool,
    flow: bool,
}

impl Layout {
    fn p(&self) -> usize {
        self.nv
    }
    fn phi(&self) -> usize {
        if self.flow {
            self.nv + self.np
        } else {
            0
        }
    }
    /// Only meaningful when `!dirichlet`.
    fn psi(&self) -> usize {
        self.phi() + self.nb
    }
    fn mu(&self) -> usize {
        if self.dirichlet {
            self.phi() + self.nb
        } else {
            self.psi() + self.ns
        }
    }
    fn theta(&self) -> usize {
        self.mu() + self.nb
    }
    fn len(&self) -> usize {
        self.theta() + self.ns
    }
}

/// Frozen data of one time step.
struct StepContext<'a> {
    disc: &'a Discretization,
    cfg: &'a ModelConfig,
    old: &'a FieldState,
    dt: f64,
    ops: FlowOperators,
    /// `p(phi^n)`, `p_Gamma(psi^n)` load vectors.
    pi_bulk: Vec<f64>,
    pi_surf: Vec<f64>,
}

impl<'a> StepContext<'a> {
    fn new(disc: &'a Discretization, cfg: &'a ModelConfig, old: &'a FieldState, dt: f64) -> Result<Self> {
        let ops = assemble_flow_operators(&disc.mesh, &disc.space, &old.phi, &old.psi, &cfg.coeffs)?;
        let pi_bulk = disc.bulk_quad.load(disc.n_bulk(), &old.phi, |s| Ok::<_, ChbError>(cfg.bulk.pi(s)))?;
        let pi_surf = disc.surf_quad.load(disc.n_surface(), &old.psi, |s| Ok::<_, ChbError>(cfg.surface.pi(s)))?;
        Ok(Self {
            disc,
            cfg,
            old,
            dt,
            ops,
            pi_bulk,
            pi_surf,
        })
    }

    fn layout(&self, flow: bool) -> Layout {
        Layout {
            nv: self.ops.n_free(),
            np: self.ops.n_pressure(),
            nb: self.disc.n_bulk(),
            ns: self.disc.n_surface(),
            dirichlet: self.cfg.is_dirichlet(),
            flow,
        }
    }

    fn pack(&self, lay: &Layout, st: &FieldState) -> Vec<f64> {
        let mut x = vec![0.0; lay.len()];
        if lay.flow {
            x[..lay.nv].copy_from_slice(&st.flow.velocity);
            x[lay.p()..lay.p() + lay.np].copy_from_slice(&st.flow.pressure);
            x[lay.p() + self.ops.pressure_pin] = 0.0;
        }
        x[lay.phi()..lay.phi() + lay.nb].copy_from_slice(&st.phi);
        if !lay.dirichlet {
            x[lay.psi()..lay.psi() + lay.ns].copy_from_slice(&st.psi);
        }
        x[lay.mu()..lay.mu() + lay.nb].copy_from_slice(&st.mu);
        x[lay.theta()..lay.theta() + lay.ns].copy_from_slice(&st.theta);
        x
    }

    fn phase_fields<'x>(&self, lay: &Layout, x: &'x [f64]) -> (&'x [f64], Vec<f64>, &'x [f64], &'x [f64]) {
        let phi = &x[lay.phi()..lay.phi() + lay.nb];
        let psi = if lay.dirichlet {
            self.disc.trace(phi)
        } else {
            x[lay.psi()..lay.psi() + lay.ns].to_vec()
        };
        (phi, psi, &x[lay.mu()..lay.mu() + lay.nb], &x[lay.theta()..lay.theta() + lay.ns])
    }

    /// Residual and Jacobian at `x`. With `frozen = Some(v)` convection uses
    /// the given velocity and the flow unknowns are absent.
    fn assemble(&self, lay: &Layout, x: &[f64], frozen: Option<&[f64]>, jac: Option<&mut TripletBuilder>) -> Result<(Vec<f64>, Mobility)> {
        let disc = self.disc;
        let cfg = self.cfg;
        let dt = self.dt;
        let sig = cfg.sigma();
        let mut r = vec![0.0; lay.len()];
        let (phi, psi, mu, theta) = self.phase_fields(lay, x);
        let v: &[f64] = match frozen {
            Some(v) => v,
            None => &x[..lay.nv],
        };

        let lm = disc.weighted_bulk_stiffness(phi, &cfg.coeffs.m_bulk)?;
        let lg = disc.weighted_surface_stiffness(&psi, &cfg.coeffs.m_surf)?;
        let fwd = &disc.mesh.trace.forward;
        let ops = &self.ops;

        if lay.flow {
            // A v + B^T p + C mu + C_G theta ; B v ; p_pin
            let p = &x[lay.p()..lay.p() + lay.np];
            let rv = &mut r[..lay.nv];
            ops.a.mul_vec_add(v, 1.0, rv);
            ops.b.mul_vec_transposed_add(p, 1.0, rv);
            ops.c.mul_vec_add(mu, 1.0, rv);
            ops.c_surf.mul_vec_add(theta, 1.0, rv);
            let bv = ops.b.mul_vec(v);
            for q in 0..lay.np {
                r[lay.p() + q] = if q == ops.pressure_pin { p[q] } else { bv[q] };
            }
        }

        // conservation rows
        let mut rphi = disc.mass.mul_vec(phi);
        disc.mass.mul_vec_add(&self.old.phi, -1.0, &mut rphi);
        ops.c.mul_vec_transposed_add(v, -dt, &mut rphi);
        lm.mul_vec_add(mu, dt, &mut rphi);
        r[lay.phi()..lay.phi() + lay.nb].copy_from_slice(&rphi);

        let mut rpsi = disc.surf_mass.mul_vec(&psi);
        disc.surf_mass.mul_vec_add(&self.old.psi, -1.0, &mut rpsi);
        ops.c_surf.mul_vec_transposed_add(v, -dt, &mut rpsi);
        lg.mul_vec_add(theta, dt, &mut rpsi);
        let surf_rows = if lay.dirichlet { lay.theta() } else { lay.psi() };
        r[surf_rows..surf_rows + lay.ns].copy_from_slice(&rpsi);

        // potential rows
        let bq = &disc.bulk_quad;
        let sq = &disc.surf_quad;
        let bb = bq.load(lay.nb, phi, |s| cfg.bulk.convex_derivative(s))?;
        let bs = sq.load(lay.ns, &psi, |s| cfg.surface.convex_derivative(s))?;
        let mut rmu = disc.stiffness.mul_vec(phi);
        disc.mass.mul_vec_add(mu, -1.0, &mut rmu);
        let mut rth = disc.surf_stiffness.mul_vec(&psi);
        for k in 0..lay.ns {
            rth[k] += bs[k] + self.pi_surf[k];
        }
        for i in 0..lay.nb {
            rmu[i] += bb[i] + self.pi_bulk[i];
        }
        if lay.dirichlet {
            disc.surf_mass.mul_vec_add(theta, -1.0, &mut rth);
            for (k, &b) in fwd.iter().enumerate() {
                rmu[b] += rth[k];
            }
            r[lay.mu()..lay.mu() + lay.nb].copy_from_slice(&rmu);
        } else {
            let mis: Vec<f64> = (0..lay.ns).map(|k| psi[k] - phi[fwd[k]]).collect();
            let rob = disc.surf_mass.mul_vec(&mis);
            for (k, &b) in fwd.iter().enumerate() {
                rmu[b] -= sig * rob[k];
                rth[k] += sig * rob[k];
            }
            disc.surf_mass.mul_vec_add(theta, -1.0, &mut rth);
            r[lay.mu()..lay.mu() + lay.nb].copy_from_slice(&rmu);
            r[lay.theta()..lay.theta() + lay.ns].copy_from_slice(&rth);
        }

        if let Some(j) = jac {
            let (o_phi, o_mu, o_th) = (lay.phi(), lay.mu(), lay.theta());
            if lay.flow {
                j.add_block(&ops.a, 0, 0, 1.0);
                let pin = ops.pressure_pin;
                for q in 0..lay.np {
                    if q == pin {
                        continue;
                    }
                    for k in ops.b.indptr[q]..ops.b.indptr[q + 1] {
                        let c = ops.b.indices[k];
                        j.push(lay.p() + q, c, ops.b.data[k]);
                        j.push(c, lay.p() + q, ops.b.data[k]);
                    }
                }
                j.push(lay.p() + pin, lay.p() + pin, 1.0);
                j.add_block(&ops.c, 0, o_mu, 1.0);
                j.add_block(&ops.c_surf, 0, o_th, 1.0);
                j.add_block_transposed(&ops.c, o_phi, 0, -dt);
            }
            // bulk conservation
            j.add_block(&disc.mass, o_phi, o_phi, 1.0);
            j.add_block(&lm, o_phi, o_mu, dt);
            // bulk potential
            j.add_block(&disc.stiffness, o_mu, o_phi, 1.0);
            bq.add_weighted_mass(phi, |s| cfg.bulk.convex_second_derivative(s), |i| i, o_mu, o_phi, 1.0, j)?;
            j.add_block(&disc.mass, o_mu, o_mu, -1.0);
            let map = |k: usize| fwd[k];
            if lay.dirichlet {
                // surface conservation rows live at the theta offset
                if lay.flow {
                    j.add_block_transposed(&ops.c_surf, o_th, 0, -dt);
                }
                push_mapped(j, &disc.surf_mass, o_th, o_phi, |k| k, map, 1.0);
                j.add_block(&lg, o_th, o_th, dt);
                push_mapped(j, &disc.surf_stiffness, o_mu, o_phi, map, map, 1.0);
                sq.add_weighted_mass(&psi, |s| cfg.surface.convex_second_derivative(s), map, o_mu, o_phi, 1.0, j)?;
                push_mapped(j, &disc.surf_mass, o_mu, o_th, map, |k| k, -1.0);
            } else {
                let o_psi = lay.psi();
                if lay.flow {
                    j.add_block_transposed(&ops.c_surf, o_psi, 0, -dt);
                }
                j.add_block(&disc.surf_mass, o_psi, o_psi, 1.0);
                j.add_block(&lg, o_psi, o_th, dt);
                // Robin coupling
                push_mapped(j, &disc.surf_mass, o_mu, o_phi, map, map, sig);
                push_mapped(j, &disc.surf_mass, o_mu, o_psi, map, |k| k, -sig);
                push_mapped(j, &disc.surf_mass, o_th, o_phi, |k| k, map, -sig);
                j.add_block(&disc.surf_stiffness, o_th, o_psi, 1.0);
                j.add_block(&disc.surf_mass, o_th, o_psi, sig);
                sq.add_weighted_mass(&psi, |s| cfg.surface.convex_second_derivative(s), |k| k, o_th, o_psi, 1.0, j)?;
                j.add_block(&disc.surf_mass, o_th, o_th, -1.0);
            }
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(ChbError::NonFinite("Newton residual".into()));
        }
        Ok((r, Mobility { bulk: lm, surface: lg }))
    }
}

/// Mobility-weighted stiffness matrices used in a step.
#[derive(Debug, Clone)]
pub struct Mobility {
    pub bulk: CsrMatrix,
    pub surface: CsrMatrix,
}

fn push_mapped(
    j: &mut TripletBuilder,
    m: &CsrMatrix,
    row0: usize,
    col0: usize,
    rmap: impl Fn(usize) -> usize,
    cmap: impl Fn(usize) -> usize,
    scale: f64,
) {
    for r in 0..m.nrows {
        for k in m.indptr[r]..m.indptr[r + 1] {
            j.push(row0 + rmap(r), col0 + cmap(m.indices[k]), scale * m.data[k]);
        }
    }
}

/// Residual and Jacobian of the phase-field rows at `iterate` with the velocity
/// frozen. Unknown order: `(phi, psi, mu, theta)`, or `(phi, mu, theta)` at `K = 0`.
pub fn assemble_ch_step(
    disc: &Discretization,
    cfg: &ModelConfig,
    old: &FieldState,
    iterate: &FieldState,
    velocity: &[f64],
) -> Result<(Vec<f64>, CsrMatrix)> {
    let ctx = StepContext::new(disc, cfg, old, cfg.dt)?;
    let lay = ctx.layout(false);
    let x = ctx.pack(&lay, iterate);
    let mut j = TripletBuilder::new(lay.len(), lay.len());
    let (r, _) = ctx.assemble(&lay, &x, Some(velocity), Some(&mut j))?;
    Ok((r, j.to_csr()))
}

/// Outcome of one accepted step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: FieldState,
    pub record: DiagnosticsRecord,
    pub newton_history: Vec<f64>,
}

/// Owns the discretization and configuration of one run.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub disc: Discretization,
    pub cfg: ModelConfig,
}

/// Receives diagnostics and field snapshots of a run.
pub trait RunSink {
    fn record(&mut self, rec: &DiagnosticsRecord) -> Result<()>;
    fn snapshot(&mut self, _step: usize, _state: &FieldState, _disc: &Discretization) -> Result<()> {
        Ok(())
    }
    /// Called with every accepted state, including the initial one.
    fn observe(&mut self, _step: usize, _state: &FieldState, _disc: &Discretization) -> Result<()> {
        Ok(())
    }
}

/// Keeps everything in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub records: Vec<DiagnosticsRecord>,
    pub states: Vec<FieldState>,
    pub keep_states: bool,
}

impl RunSink for MemorySink {
    fn record(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        self.records.push(rec.clone());
        Ok(())
    }

    fn snapshot(&mut self, _step: usize, state: &FieldState, _disc: &Discretization) -> Result<()> {
        if self.keep_states {
            self.states.push(state.clone());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_state: FieldState,
    pub steps: usize,
    pub rejected_steps: usize,
}

impl Simulator {
    pub fn new(n: usize, cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            disc: Discretization::new(n)?,
            cfg,
        })
    }

    pub fn initial_state(&self, init: &InitialData) -> Result<FieldState> {
        project_initial_data(&self.disc, &self.cfg, init)
    }

    /// One step with the configured `dt`.
    pub fn step(&self, state: &FieldState) -> Result<StepOutcome> {
        self.step_with_dt(state, self.cfg.dt)
    }

    pub fn step_with_dt(&self, old: &FieldState, dt: f64) -> Result<StepOutcome> {
        let disc = &self.disc;
        let cfg = &self.cfg;
        let ctx = StepContext::new(disc, cfg, old, dt)?;
        let (frozen, flow_guess) = match cfg.scheme {
            Scheme::Coupled => (None, None),
            Scheme::Lagged => {
                let f = ctx.ops.capillary_rhs(&old.mu, &old.theta);
                let sol = BrinkmanSolver::new(ctx.ops.clone())?.solve(&f)?;
                (Some(sol.velocity.clone()), Some(sol))
            }
        };
        let lay = ctx.layout(frozen.is_none());
        let mut x = ctx.pack(&lay, old);
        let mut history = Vec::new();
        let mut iters = 0;
        let (mut r, mut mobility) = ctx.assemble(&lay, &x, frozen.as_deref(), None)?;
        let mut rn = norm_inf(&r);
        history.push(rn);
        // the factorization is kept while the iteration contracts fast enough
        let mut lu: Option<SparseLu> = None;
        while rn > cfg.newton_tol {
            if iters >= cfg.newton_max_iter {
                return Err(ChbError::solver(
                    format!("Newton did not converge in {iters} iterations at t = {}; halve dt", old.t + dt),
                    history,
                ));
            }
            let r2 = dot(&r, &r).sqrt();
            if let Some(f) = &lu {
                let delta = f.solve(&r)?;
                let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a - d).collect();
                match ctx.assemble(&lay, &trial, frozen.as_deref(), None) {
                    Ok((rt, mt)) if dot(&rt, &rt).sqrt() <= 0.5 * r2 => {
                        x = trial;
                        r = rt;
                        mobility = mt;
                        iters += 1;
                        rn = norm_inf(&r);
                        history.push(rn);
                    }
                    _ => lu = None,
                }
                continue;
            }
            let mut j = TripletBuilder::with_capacity(lay.len(), lay.len(), 64 * lay.len());
            ctx.assemble(&lay, &x, frozen.as_deref(), Some(&mut j))?;
            let f = j.factorize()?;
            let delta = f.solve(&r)?;
            lu = Some(f);
            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a - alpha * d).collect();
                match ctx.assemble(&lay, &trial, frozen.as_deref(), None) {
                    Ok((rt, mt)) if dot(&rt, &rt).sqrt() < r2 || alpha < 1.0 / 1024.0 => {
                        x = trial;
                        r = rt;
                        mobility = mt;
                        break;
                    }
                    Err(e) if alpha < 1.0 / 1024.0 => return Err(e),
                    _ => alpha *= 0.5,
                }
            }
            if alpha < 1.0 {
                lu = None;
            }
            iters += 1;
            rn = norm_inf(&r);
            history.push(rn);
        }

        let (phi, psi, mu, theta) = ctx.phase_fields(&lay, &x);
        let flow = match flow_guess {
            Some(f) => f,
            None => {
                let mut pressure = x[lay.p()..lay.p() + lay.np].to_vec();
                ctx.ops.normalize_pressure(&mut pressure);
                FlowSolution {
                    velocity: x[..lay.nv].to_vec(),
                    pressure,
                }
            }
        };
        let state = FieldState {
            t: old.t + dt,
            phi: phi.to_vec(),
            psi,
            mu: mu.to_vec(),
            theta: theta.to_vec(),
            flow,
        };
        if !state.is_finite() {
            return Err(ChbError::NonFinite(format!("state at t = {}", state.t)));
        }
        let record = diagnostics::step_record(disc, cfg, old, &state, dt, &ctx.ops, &mobility, iters, rn)?;
        Ok(StepOutcome {
            state,
            record,
            newton_history: history,
        })
    }

    /// Steps from `dt` down by halving after Newton failures.
    fn advance(&self, state: &FieldState, dt: f64, depth: u32, out: &mut Vec<StepOutcome>, rejected: &mut usize) -> Result<()> {
        match self.step_with_dt(state, dt) {
            Ok(o) => {
                out.push(o);
                Ok(())
            }
            Err(ChbError::Solver { .. }) if depth < self.cfg.max_halvings => {
                *rejected += 1;
                let mut cur = state.clone();
                for _ in 0..2 {
                    self.advance(&cur, dt / 2.0, depth + 1, out, rejected)?;
                    cur = out.last().unwrap().state.clone();
                }
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    /// Runs from `init` to `T`, reporting every accepted step.
    pub fn run(&self, init: FieldState, sink: &mut dyn RunSink, fields_every: Option<usize>) -> Result<RunResult> {
        let cfg = &self.cfg;
        let rec0 = diagnostics::initial_record(&self.disc, cfg, &init)?;
        sink.record(&rec0)?;
        sink.snapshot(0, &init, &self.disc)?;
        sink.observe(0, &init, &self.disc)?;
        let n_steps = cfg.n_steps();
        let mut state = init;
        let mut step = 0usize;
        let mut rejected = 0usize;
        for k in 0..n_steps {
            let t_target = if k + 1 == n_steps { cfg.t_final } else { (k + 1) as f64 * cfg.dt };
            let dt = t_target - state.t;
            let mut outs = Vec::new();
            self.advance(&state, dt, 0, &mut outs, &mut rejected)?;
            for mut o in outs {
                step += 1;
                o.record.step = step;
                sink.record(&o.record)?;
                sink.observe(step, &o.state, &self.disc)?;
                if let Some(every) = fields_every {
                    if every > 0 && step % every == 0 {
                        sink.snapshot(step, &o.state, &self.disc)?;
                    }
                }
                state = o.state;
            }
        }
        if let Some(every) = fields_every {
            if step > 0 && (every == 0 || step % every != 0) {
                sink.snapshot(step, &state, &self.disc)?;
            }
        }
        Ok(RunResult {
            final_state: state,
            steps: step,
            rejected_steps: rejected,
        })
    }
}

/// Whether a regularized potential wraps the obstacle graph.
pub fn is_obstacle(sp: &SchemePotential) -> bool {
    matches!(sp.potential.convex_graph(), MonotoneGraph::Obstacle)
}
