//! Quasi-stationary Brinkman/Stokes solve with impermeable, Navier-slip walls
//! and capillary forcing from the phase fields.
//!
//! Velocity is quadratic (see [`VelocitySpace`]), pressure linear on the bulk
//! triangulation. The saddle-point system is
//!
//! ```text
//! [ A  B^T ] [v]   [F]
//! [ B  0   ] [p] = [0]
//! ```
//!
//! with `A = 2 nu D:D + lambda I + gamma I_Gamma`, `B = -int q div w`, and
//! `F = -(C mu + C_Gamma theta)`. One pressure node is pinned during the
//! solve and the result shifted to zero mean.

use crate::error::{Assumption, ChbError, Result};
use crate::fem::{p1_at, p2_gradients, p2_values, VelocitySpace, SEG_QUAD_3, TRI_QUAD_7};
use crate::geometry::{Mesh, Point};
use crate::sparse::{dot, CsrMatrix, SparseLu, TripletBuilder};

/// Coefficient as a function of the local phase value.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientFn {
    Constant(f64),
    /// `clamp(a + b r, lo, hi)`
    ClampedAffine { a: f64, b: f64, lo: f64, hi: f64 },
    /// Piecewise linear through `(r_k, v_k)`, constant beyond the ends.
    Tabulated { r: Vec<f64>, v: Vec<f64> },
}

impl CoefficientFn {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            CoefficientFn::Constant(c) => *c,
            CoefficientFn::ClampedAffine { a, b, lo, hi } => (a + b * s).clamp(*lo, *hi),
            CoefficientFn::Tabulated { r, v } => {
                if s <= r[0] {
                    return v[0];
                }
                let last = r.len() - 1;
                if s >= r[last] {
                    return v[last];
                }
                let k = r.partition_point(|&x| x <= s) - 1;
                let t = (s - r[k]) / (r[k + 1] - r[k]);
                v[k] + t * (v[k + 1] - v[k])
            }
        }
    }

    /// Exact (lower, upper) bound over all of R.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            CoefficientFn::Constant(c) => (*c, *c),
            CoefficientFn::ClampedAffine { lo, hi, b, a } => {
                if *b == 0.0 {
                    let c = a.clamp(*lo, *hi);
                    (c, c)
                } else {
                    (*lo, *hi)
                }
            }
            CoefficientFn::Tabulated { v, .. } => v
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x))),
        }
    }

    pub fn is_constant(&self) -> bool {
        let (l, h) = self.bounds();
        l == h
    }

    fn check_shape(&self) -> Result<()> {
        match self {
            CoefficientFn::Constant(c) if !c.is_finite() => {
                Err(ChbError::Config("non-finite constant coefficient".into()))
            }
            CoefficientFn::ClampedAffine { lo, hi, a, b } => {
                if !(lo <= hi) || !a.is_finite() || !b.is_finite() {
                    return Err(ChbError::Config(format!("affine coefficient needs lo <= hi, got [{lo}, {hi}]")));
                }
                Ok(())
            }
            CoefficientFn::Tabulated { r, v } => {
                if r.is_empty() || r.len() != v.len() {
                    return Err(ChbError::Config("tabulated coefficient needs matching nonempty r, v".into()));
                }
                if r.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ChbError::Config("tabulated coefficient nodes must increase".into()));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(ChbError::Config("non-finite tabulated coefficient".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Phase-dependent material coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub nu: CoefficientFn,
    pub lambda: CoefficientFn,
    pub gamma: CoefficientFn,
    pub m_bulk: CoefficientFn,
    pub m_surf: CoefficientFn,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self {
            nu: CoefficientFn::Constant(1.0),
            lambda: CoefficientFn::Constant(0.0),
            gamma: CoefficientFn::Constant(0.0),
            m_bulk: CoefficientFn::Constant(1.0),
            m_surf: CoefficientFn::Constant(1.0),
        }
    }
}

impl Coefficients {
    /// Checks the mobility and viscosity/permeability/friction bounds.
    pub fn validate(&self) -> Result<()> {
        for c in [&self.nu, &self.lambda, &self.gamma, &self.m_bulk, &self.m_surf] {
            c.check_shape()?;
        }
        let (nu1, _) = self.nu.bounds();
        if !(nu1 > 0.0) {
            return Err(ChbError::assumption(
                Assumption::Viscosity,
                format!("requires 0 < nu_1 <= nu(r), got nu_1 = {nu1}"),
            ));
        }
        let (l1, _) = self.lambda.bounds();
        if l1 < 0.0 {
            return Err(ChbError::assumption(
                Assumption::Viscosity,
                format!("requires 0 <= lambda(r), got min lambda = {l1}"),
            ));
        }
        let (g1, _) = self.gamma.bounds();
        if g1 < 0.0 {
            return Err(ChbError::assumption(
                Assumption::Viscosity,
                format!("requires 0 <= gamma_1 <= gamma(r), got gamma_1 = {g1}"),
            ));
        }
        for (name, c) in [("M_Omega", &self.m_bulk), ("M_Gamma", &self.m_surf)] {
            let (m1, _) = c.bounds();
            if !(m1 > 0.0) {
                return Err(ChbError::assumption(
                    Assumption::Mobility,
                    format!("requires 0 < M_1 <= {name}(r), got M_1 = {m1}"),
                ));
            }
        }
        Ok(())
    }

    pub fn all_constant_for_stability(&self) -> bool {
        self.nu.is_constant() && self.m_bulk.is_constant() && self.m_surf.is_constant()
    }
}

/// Pointwise check used during assembly.
fn checked(c: &CoefficientFn, s: f64, strict: bool, assumption: Assumption, name: &str) -> Result<f64> {
    let v = c.eval(s);
    let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
    if !ok {
        return Err(ChbError::assumption(
            assumption,
            format!("{name} = {v} at quadrature point with phase value {s}"),
        ));
    }
    Ok(v)
}

/// Velocity-side operators for a given frozen pair `(phi, psi)`.
#[derive(Debug, Clone)]
pub struct FlowOperators {
    pub space: VelocitySpace,
    pub viscous: CsrMatrix,
    pub permeability: CsrMatrix,
    pub friction: CsrMatrix,
    /// `viscous + permeability + friction`
    pub a: CsrMatrix,
    /// Divergence `(n_bulk x n_free)`: `B[q, w] = -int q div w`.
    pub b: CsrMatrix,
    /// Bulk capillary coupling `(n_free x n_bulk)`: `C[w, j] = int phi grad chi_j . w`.
    pub c: CsrMatrix,
    /// Surface capillary coupling `(n_free x n_surface)`: `int_Gamma psi d_s chi_j (tau . w)`.
    pub c_surf: CsrMatrix,
    /// P1 bulk mass, used for the pressure mean.
    pub pressure_mass_row: Vec<f64>,
    pub pressure_pin: usize,
}

impl FlowOperators {
    pub fn n_free(&self) -> usize {
        self.space.n_free
    }

    pub fn n_pressure(&self) -> usize {
        self.b.nrows
    }

    /// `-(C mu + C_Gamma theta)`
    pub fn capillary_rhs(&self, mu: &[f64], theta: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.n_free()];
        self.c.mul_vec_add(mu, -1.0, &mut f);
        self.c_surf.mul_vec_add(theta, -1.0, &mut f);
        f
    }

    /// Shifts a nodal pressure to zero mean.
    pub fn normalize_pressure(&self, p: &mut [f64]) {
        let area: f64 = self.pressure_mass_row.iter().sum();
        let mean = dot(&self.pressure_mass_row, p) / area;
        p.iter_mut().for_each(|x| *x -= mean);
    }
}

/// Assembles the flow operators with coefficients evaluated at `phi` (bulk)
/// and `psi` (surface).
pub fn assemble_flow_operators(
    mesh: &Mesh,
    space: &VelocitySpace,
    phi: &[f64],
    psi: &[f64],
    coeffs: &Coefficients,
) -> Result<FlowOperators> {
    let nb = mesh.n_bulk();
    let ns = mesh.n_surface();
    if phi.len() != nb {
        return Err(ChbError::LengthMismatch { expected: nb, got: phi.len() });
    }
    if psi.len() != ns {
        return Err(ChbError::LengthMismatch { expected: ns, got: psi.len() });
    }
    let nf = space.n_free;
    let bulk = &mesh.bulk;
    let fi = &space.free_index;
    let mut visc = TripletBuilder::with_capacity(nf, nf, 144 * bulk.n_triangles());
    let mut perm = TripletBuilder::with_capacity(nf, nf, 144 * bulk.n_triangles());
    let mut div = TripletBuilder::with_capacity(nb, nf, 36 * bulk.n_triangles());
    let mut cap = TripletBuilder::with_capacity(nf, nb, 36 * bulk.n_triangles());

    // local dof 2 i + c is component c of P2 node i
    for (e, tri) in bulk.triangles.iter().enumerate() {
        let nodes = &space.elements[e];
        let area = bulk.element_areas[e];
        let g = bulk.barycentric_gradients(e);
        let mut kv = [[0.0; 12]; 12];
        let mut kp = [[0.0; 12]; 12];
        let mut kd = [[0.0; 12]; 3];
        let mut kc = [[0.0; 3]; 12];
        for (l, w) in TRI_QUAD_7.iter() {
            let wq = w * area;
            let s = p1_at(tri, phi, *l);
            let nu = checked(&coeffs.nu, s, true, Assumption::Viscosity, "nu")?;
            let lam = checked(&coeffs.lambda, s, false, Assumption::Viscosity, "lambda")?;
            let nv = p2_values(*l);
            let dn = p2_gradients(*l, &g);
            for i in 0..6 {
                for ci in 0..2 {
                    let li = 2 * i + ci;
                    // divergence and capillary rows of test function w = N_i e_ci
                    for k in 0..3 {
                        kd[k][li] -= wq * l[k] * dn[i][ci];
                        kc[li][k] += wq * s * g[k][ci] * nv[i];
                    }
                    for j in 0..6 {
                        let gij = dn[i][0] * dn[j][0] + dn[i][1] * dn[j][1];
                        for cj in 0..2 {
                            let mut a = dn[j][ci] * dn[i][cj];
                            if ci == cj {
                                a += gij;
                                kp[li][2 * j + cj] += wq * lam * nv[i] * nv[j];
                            }
                            kv[li][2 * j + cj] += wq * nu * a;
                        }
                    }
                }
            }
        }
        let rows: [Option<usize>; 12] = std::array::from_fn(|li| fi[2 * nodes[li / 2] + li % 2]);
        for li in 0..12 {
            let Some(ri) = rows[li] else { continue };
            for k in 0..3 {
                div.push(tri[k], ri, kd[k][li]);
                cap.push(ri, tri[k], kc[li][k]);
            }
            for lj in 0..12 {
                if let Some(rj) = rows[lj] {
                    visc.push(ri, rj, kv[li][lj]);
                    perm.push(ri, rj, kp[li][lj]);
                }
            }
        }
    }

    let surface = &mesh.surface;
    let mut fric = TripletBuilder::with_capacity(nf, nf, 36 * ns);
    let mut cap_s = TripletBuilder::with_capacity(nf, ns, 12 * ns);
    for (k, seg) in space.boundary_segments.iter().enumerate() {
        let h = surface.segment_lengths[k];
        let tau = surface.tangent(k);
        let (a, b) = (k, surface.next(k));
        for (t, w) in SEG_QUAD_3.iter() {
            let wq = w * h;
            let s = (1.0 - t) * psi[a] + t * psi[b];
            let gam = checked(&coeffs.gamma, s, false, Assumption::Viscosity, "gamma")?;
            let nv = [(1.0 - t) * (1.0 - 2.0 * t), 4.0 * t * (1.0 - t), t * (2.0 * t - 1.0)];
            for i in 0..3 {
                for ci in 0..2 {
                    let Some(ri) = fi[2 * seg[i] + ci] else { continue };
                    let wt = nv[i] * tau[ci];
                    let ds = wq * s * wt / h;
                    cap_s.push(ri, a, -ds);
                    cap_s.push(ri, b, ds);
                    for j in 0..3 {
                        if let Some(rj) = fi[2 * seg[j] + ci] {
                            fric.push(ri, rj, wq * gam * nv[i] * nv[j]);
                        }
                    }
                }
            }
        }
    }

    let viscous = visc.to_csr();
    let permeability = perm.to_csr();
    let friction = fric.to_csr();
    let mut sum = TripletBuilder::with_capacity(nf, nf, viscous.nnz() + permeability.nnz() + friction.nnz());
    sum.add_block(&viscous, 0, 0, 1.0);
    sum.add_block(&permeability, 0, 0, 1.0);
    sum.add_block(&friction, 0, 0, 1.0);
    let pressure_mass_row = bulk.mass_matrix().row_sums();
    Ok(FlowOperators {
        space: space.clone(),
        viscous,
        permeability,
        friction,
        a: sum.to_csr(),
        b: div.to_csr(),
        c: cap.to_csr(),
        c_surf: cap_s.to_csr(),
        pressure_mass_row,
        pressure_pin: 0,
    })
}

/// Velocity (free dofs) and zero-mean nodal pressure.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl FlowSolution {
    pub fn zero(n_free: usize, n_pressure: usize) -> Self {
        Self {
            velocity: vec![0.0; n_free],
            pressure: vec![0.0; n_pressure],
        }
    }
}

/// Assembled saddle-point system with its right-hand side.
#[derive(Debug, Clone)]
pub struct BrinkmanSystem {
    pub ops: FlowOperators,
    pub rhs: Vec<f64>,
}

impl BrinkmanSystem {
    /// Full saddle matrix (pressure pin and all) over `[v; p]`.
    pub fn saddle_matrix(&self) -> CsrMatrix {
        saddle_builder(&self.ops).to_csr()
    }
}

/// Builds `[A B^T; B 0]` with the pinned pressure row/column replaced by identity.
fn saddle_builder(ops: &FlowOperators) -> TripletBuilder {
    let nf = ops.n_free();
    let np = ops.n_pressure();
    let mut t = TripletBuilder::with_capacity(nf + np, nf + np, ops.a.nnz() + 2 * ops.b.nnz() + 1);
    t.add_block(&ops.a, 0, 0, 1.0);
    let pin = ops.pressure_pin;
    for r in 0..ops.b.nrows {
        if r == pin {
            continue;
        }
        for k in ops.b.indptr[r]..ops.b.indptr[r + 1] {
            let c = ops.b.indices[k];
            let v = ops.b.data[k];
            t.push(nf + r, c, v);
            t.push(c, nf + r, v);
        }
    }
    t.push(nf + pin, nf + pin, 1.0);
    t
}

/// Assembles the Brinkman system driven by the capillary forces of
/// `(phi, mu)` in the bulk and `(psi, theta)` on the surface.
pub fn assemble_brinkman(
    mesh: &Mesh,
    space: &VelocitySpace,
    phi: &[f64],
    psi: &[f64],
    mu: &[f64],
    theta: &[f64],
    coeffs: &Coefficients,
) -> Result<BrinkmanSystem> {
    let ops = assemble_flow_operators(mesh, space, phi, psi, coeffs)?;
    if mu.len() != mesh.n_bulk() {
        return Err(ChbError::LengthMismatch { expected: mesh.n_bulk(), got: mu.len() });
    }
    if theta.len() != mesh.n_surface() {
        return Err(ChbError::LengthMismatch { expected: mesh.n_surface(), got: theta.len() });
    }
    let rhs = ops.capillary_rhs(mu, theta);
    Ok(BrinkmanSystem { ops, rhs })
}

/// Factorized saddle-point operator, reusable across right-hand sides.
pub struct BrinkmanSolver {
    ops: FlowOperators,
    lu: SparseLu,
}

impl BrinkmanSolver {
    pub fn new(ops: FlowOperators) -> Result<Self> {
        let lu = saddle_builder(&ops).factorize()?;
        Ok(Self { ops, lu })
    }

    pub fn ops(&self) -> &FlowOperators {
        &self.ops
    }

    /// Solves with velocity load `f` (free dofs).
    pub fn solve(&self, f: &[f64]) -> Result<FlowSolution> {
        let nf = self.ops.n_free();
        let np = self.ops.n_pressure();
        if f.len() != nf {
            return Err(ChbError::LengthMismatch { expected: nf, got: f.len() });
        }
        let mut rhs = vec![0.0; nf + np];
        rhs[..nf].copy_from_slice(f);
        let x = self.lu.solve(&rhs)?;
        let mut pressure = x[nf..].to_vec();
        self.ops.normalize_pressure(&mut pressure);
        let sol = FlowSolution {
            velocity: x[..nf].to_vec(),
            pressure,
        };
        let res = self.residual_norm(&sol, f);
        let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        if !(res <= 1e-8 * scale.max(1.0)) {
            return Err(ChbError::solver("Brinkman direct solve inaccurate", vec![res]));
        }
        Ok(sol)
    }

    /// `max(|A v + B^T p - f|, |B v|)` in the max norm.
    pub fn residual_norm(&self, sol: &FlowSolution, f: &[f64]) -> f64 {
        let ops = &self.ops;
        let mut r = ops.a.mul_vec(&sol.velocity);
        ops.b.mul_vec_transposed_add(&sol.pressure, 1.0, &mut r);
        let rv = r.iter().zip(f).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let rp = ops.b.mul_vec(&sol.velocity).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        rv.max(rp)
    }
}

pub fn solve_brinkman(system: &BrinkmanSystem) -> Result<FlowSolution> {
    BrinkmanSolver::new(system.ops.clone())?.solve(&system.rhs)
}

/// Relative residual of `v^T A v = v^T F` for a solved system.
pub fn energy_identity_residual(ops: &FlowOperators, sol: &FlowSolution, f: &[f64]) -> f64 {
    let lhs = ops.a.quadratic(&sol.velocity);
    let rhs = dot(&sol.velocity, f);
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300)
}

/// Max-norm of the discrete divergence `B v`.
pub fn divergence_residual(ops: &FlowOperators, v: &[f64]) -> f64 {
    ops.b.mul_vec(v).iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KornReport {
    /// `max ||grad v|| / (||D v|| + ||v||_Gamma)`
    pub with_boundary: f64,
    /// `max ||grad v|| / ||D v||`
    pub symmetric_only: f64,
    pub samples: usize,
}

/// Gram matrices over the free velocity dofs: `(int grad:grad, int D:D, int_Gamma v.w)`.
pub fn velocity_gram_matrices(mesh: &Mesh, space: &VelocitySpace) -> Result<(CsrMatrix, CsrMatrix, CsrMatrix)> {
    let ones = Coefficients {
        nu: CoefficientFn::Constant(0.5),
        lambda: CoefficientFn::Constant(0.0),
        gamma: CoefficientFn::Constant(1.0),
        ..Coefficients::default()
    };
    // A = 2 nu D:D with nu = 1/2 gives int D:D; friction with gamma = 1 gives the boundary mass
    let zeros_b = vec![0.0; mesh.n_bulk()];
    let zeros_s = vec![0.0; mesh.n_surface()];
    let ops = assemble_flow_operators(mesh, space, &zeros_b, &zeros_s, &ones)?;
    let nf = space.n_free;
    let fi = &space.free_index;
    let bulk = &mesh.bulk;
    let mut gg = TripletBuilder::with_capacity(nf, nf, 72 * bulk.n_triangles());
    for (e, _) in bulk.triangles.iter().enumerate() {
        let nodes = &space.elements[e];
        let area = bulk.element_areas[e];
        let g = bulk.barycentric_gradients(e);
        for (l, w) in TRI_QUAD_7.iter() {
            let dn = p2_gradients(*l, &g);
            for i in 0..6 {
                for j in 0..6 {
                    let gij = dn[i][0] * dn[j][0] + dn[i][1] * dn[j][1];
                    for c in 0..2 {
                        if let (Some(ri), Some(rj)) = (fi[2 * nodes[i] + c], fi[2 * nodes[j] + c]) {
                            gg.push(ri, rj, w * area * gij);
                        }
                    }
                }
            }
        }
    }
    Ok((gg.to_csr(), ops.viscous, ops.friction))
}

/// Empirical Korn ratios over sample velocity fields (free-dof vectors).
pub fn verify_korn(mesh: &Mesh, space: &VelocitySpace, samples: &[Vec<f64>]) -> Result<KornReport> {
    let (gg, dd, bm) = velocity_gram_matrices(mesh, space)?;
    let mut rep = KornReport {
        with_boundary: 0.0,
        symmetric_only: 0.0,
        samples: 0,
    };
    for v in samples {
        if v.len() != space.n_free {
            return Err(ChbError::LengthMismatch { expected: space.n_free, got: v.len() });
        }
        let g = gg.quadratic(v).max(0.0).sqrt();
        let d = dd.quadratic(v).max(0.0).sqrt();
        let b = bm.quadratic(v).max(0.0).sqrt();
        if g == 0.0 {
            continue;
        }
        rep.with_boundary = rep.with_boundary.max(g / (d + b));
        rep.symmetric_only = rep.symmetric_only.max(g / d);
        rep.samples += 1;
    }
    Ok(rep)
}

/// Manufactured solenoidal field tangential on the unit square.
pub fn mms_velocity(p: Point) -> [f64; 2] {
    use std::f64::consts::PI;
    let (x, y) = (p[0], p[1]);
    [(PI * x).sin() * (PI * y).cos(), -(PI * x).cos() * (PI * y).sin()]
}

pub fn mms_pressure(p: Point) -> f64 {
    use std::f64::consts::PI;
    (PI * p[0]).cos() * (PI * p[1]).cos()
}

/// Body force for the manufactured pair with constant `nu`, `lambda`.
pub fn mms_body_force(p: Point, nu: f64, lambda: f64) -> [f64; 2] {
    use std::f64::consts::PI;
    let v = mms_velocity(p);
    let (x, y) = (p[0], p[1]);
    let gp = [-PI * (PI * x).sin() * (PI * y).cos(), -PI * (PI * x).cos() * (PI * y).sin()];
    let c = 2.0 * PI * PI * nu + lambda;
    [c * v[0] + gp[0], c * v[1] + gp[1]]
}

/// Load vector `int f.w + int_Gamma g.w` for closed-form `f` and boundary traction `g`.
pub fn load_vector(
    mesh: &Mesh,
    space: &VelocitySpace,
    f: impl Fn(Point) -> [f64; 2],
    g: impl Fn(Point) -> [f64; 2],
) -> Vec<f64> {
    let bulk = &mesh.bulk;
    let fi = &space.free_index;
    let mut out = vec![0.0; space.n_free];
    for (e, _) in bulk.triangles.iter().enumerate() {
        let nodes = &space.elements[e];
        let area = bulk.element_areas[e];
        for (l, w) in TRI_QUAD_7.iter() {
            let x = bulk.point_at(e, *l);
            let fx = f(x);
            let nv = p2_values(*l);
            for i in 0..6 {
                for c in 0..2 {
                    if let Some(r) = fi[2 * nodes[i] + c] {
                        out[r] += w * area * fx[c] * nv[i];
                    }
                }
            }
        }
    }
    let surface = &mesh.surface;
    for (k, seg) in space.boundary_segments.iter().enumerate() {
        let h = surface.segment_lengths[k];
        let (pa, pb) = (surface.coords[k], surface.coords[surface.next(k)]);
        for (t, w) in SEG_QUAD_3.iter() {
            let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
            let gx = g(x);
            let nv = [(1.0 - t) * (1.0 - 2.0 * t), 4.0 * t * (1.0 - t), t * (2.0 * t - 1.0)];
            for i in 0..3 {
                for c in 0..2 {
                    if let Some(r) = fi[2 * seg[i] + c] {
                        out[r] += w * h * gx[c] * nv[i];
                    }
                }
            }
        }
    }
    out
}

/// L2 error of a discrete velocity against a closed-form field.
pub fn velocity_l2_error(mesh: &Mesh, space: &VelocitySpace, v: &[f64], exact: impl Fn(Point) -> [f64; 2]) -> f64 {
    let nodal = space.expand(v);
    let bulk = &mesh.bulk;
    let mut err = 0.0;
    for (e, _) in bulk.triangles.iter().enumerate() {
        let nodes = &space.elements[e];
        let area = bulk.element_areas[e];
        for (l, w) in TRI_QUAD_7.iter() {
            let x = bulk.point_at(e, *l);
            let ex = exact(x);
            let nv = p2_values(*l);
            let mut vh = [0.0; 2];
            for i in 0..6 {
                vh[0] += nv[i] * nodal[nodes[i]][0];
                vh[1] += nv[i] * nodal[nodes[i]][1];
            }
            err += w * area * ((vh[0] - ex[0]).powi(2) + (vh[1] - ex[1]).powi(2));
        }
    }
    err.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrinkmanMmsRow {
    pub n: usize,
    pub h: f64,
    pub velocity_l2: f64,
    pub pressure_l2: f64,
    pub energy_identity: f64,
    pub divergence: f64,
}

/// Runs the manufactured flow at mesh size `n` with constant coefficients.
pub fn brinkman_mms(n: usize, nu: f64, lambda: f64, gamma: f64) -> Result<BrinkmanMmsRow> {
    let mesh = Mesh::unit_square(n)?;
    let space = VelocitySpace::new(&mesh);
    let coeffs = Coefficients {
        nu: CoefficientFn::Constant(nu),
        lambda: CoefficientFn::Constant(lambda),
        gamma: CoefficientFn::Constant(gamma),
        ..Coefficients::default()
    };
    let ops = assemble_flow_operators(&mesh, &space, &vec![0.0; mesh.n_bulk()], &vec![0.0; mesh.n_surface()], &coeffs)?;
    // the exact symmetric gradient has no shear, so the traction is gamma v
    let f = load_vector(
        &mesh,
        &space,
        |p| mms_body_force(p, nu, lambda),
        |p| {
            let v = mms_velocity(p);
            [gamma * v[0], gamma * v[1]]
        },
    );
    let solver = BrinkmanSolver::new(ops)?;
    let sol = solver.solve(&f)?;
    let ops = solver.ops();
    let velocity_l2 = velocity_l2_error(&mesh, &space, &sol.velocity, mms_velocity);
    let bulk = &mesh.bulk;
    let mut perr = 0.0;
    for (e, tri) in bulk.triangles.iter().enumerate() {
        for (l, w) in TRI_QUAD_7.iter() {
            let x = bulk.point_at(e, *l);
            let d = p1_at(tri, &sol.pressure, *l) - mms_pressure(x);
            perr += w * bulk.element_areas[e] * d * d;
        }
    }
    Ok(BrinkmanMmsRow {
        n,
        h: 1.0 / n as f64,
        velocity_l2,
        pressure_l2: perr.sqrt(),
        energy_identity: energy_identity_residual(ops, &sol, &f),
        divergence: divergence_residual(ops, &sol.velocity),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize) -> (Mesh, VelocitySpace) {
        let m = Mesh::unit_square(n).unwrap();
        let s = VelocitySpace::new(&m);
        (m, s)
    }

    #[test]
    fn coefficient_evaluation() {
        let c = CoefficientFn::ClampedAffine { a: 1.0, b: 0.5, lo: 0.5, hi: 1.5 };
        assert_eq!(c.eval(0.0), 1.0);
        assert_eq!(c.eval(4.0), 1.5);
        assert_eq!(c.bounds(), (0.5, 1.5));
        let t = CoefficientFn::Tabulated { r: vec![-1.0, 1.0], v: vec![1.0, 3.0] };
        assert_eq!(t.eval(0.0), 2.0);
        assert_eq!(t.eval(-5.0), 1.0);
    }

    #[test]
    fn viscosity_bound_violation_names_assumption() {
        let c = Coefficients {
            nu: CoefficientFn::Constant(0.0),
            ..Coefficients::default()
        };
        match c.validate() {
            Err(ChbError::Assumption { assumption, .. }) => assert_eq!(assumption, Assumption::Viscosity),
            other => panic!("unexpected {other:?}"),
        }
        let c = Coefficients {
            m_surf: CoefficientFn::Constant(-1.0),
            ..Coefficients::default()
        };
        assert!(matches!(
            c.validate(),
            Err(ChbError::Assumption { assumption: Assumption::Mobility, .. })
        ));
    }

    #[test]
    fn constant_fields_give_zero_rhs_and_flow() {
        let (m, s) = setup(4);
        let sys = assemble_brinkman(
            &m,
            &s,
            &vec![0.3; m.n_bulk()],
            &vec![0.3; m.n_surface()],
            &vec![1.2; m.n_bulk()],
            &vec![-0.4; m.n_surface()],
            &Coefficients::default(),
        )
        .unwrap();
        assert!(sys.rhs.iter().all(|v| v.abs() < 1e-14));
        let sol = solve_brinkman(&sys).unwrap();
        assert!(sol.velocity.iter().all(|v| v.abs() < 1e-13));
        assert!(sol.pressure.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn velocity_block_symmetric() {
        let (m, s) = setup(3);
        let phi: Vec<f64> = m.bulk.node_coords.iter().map(|p| p[0] - p[1]).collect();
        let coeffs = Coefficients {
            nu: CoefficientFn::ClampedAffine { a: 1.0, b: 0.3, lo: 0.5, hi: 2.0 },
            lambda: CoefficientFn::Constant(2.0),
            gamma: CoefficientFn::Constant(0.5),
            ..Coefficients::default()
        };
        let ops = assemble_flow_operators(&m, &s, &phi, &vec![0.1; m.n_surface()], &coeffs).unwrap();
        assert!(ops.a.max_asymmetry() <= 1e-13);
    }

    #[test]
    fn linear_energy_and_scaling() {
        let (m, s) = setup(6);
        let phi: Vec<f64> = m.bulk.node_coords.iter().map(|p| (3.0 * p[0]).sin() * p[1]).collect();
        let mu: Vec<f64> = m.bulk.node_coords.iter().map(|p| p[0] * p[0] + p[1]).collect();
        let psi: Vec<f64> = m.surface.arclength.iter().map(|s| s.cos()).collect();
        let theta: Vec<f64> = m.surface.arclength.iter().map(|s| (2.0 * s).sin()).collect();
        let c = Coefficients {
            gamma: CoefficientFn::Constant(0.7),
            lambda: CoefficientFn::Constant(0.2),
            ..Coefficients::default()
        };
        let sys = assemble_brinkman(&m, &s, &phi, &psi, &mu, &theta, &c).unwrap();
        let sol = solve_brinkman(&sys).unwrap();
        assert!(energy_identity_residual(&sys.ops, &sol, &sys.rhs) <= 1e-8);
        assert!(divergence_residual(&sys.ops, &sol.velocity) <= 1e-10);
        let mean = dot(&sys.ops.pressure_mass_row, &sol.pressure);
        assert!(mean.abs() <= 1e-12);
        let mu2: Vec<f64> = mu.iter().map(|x| 2.0 * x).collect();
        let th2: Vec<f64> = theta.iter().map(|x| 2.0 * x).collect();
        let sys2 = assemble_brinkman(&m, &s, &phi, &psi, &mu2, &th2, &c).unwrap();
        let sol2 = solve_brinkman(&sys2).unwrap();
        for (a, b) in sol.velocity.iter().zip(&sol2.velocity) {
            assert!((2.0 * a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn gradient_body_force_is_absorbed_by_pressure() {
        let (m, s) = setup(4);
        let c = Coefficients::default();
        let ops = assemble_flow_operators(&m, &s, &vec![0.0; m.n_bulk()], &vec![0.0; m.n_surface()], &c).unwrap();
        let f = load_vector(&m, &s, |_| [1.0, 2.0], |_| [0.0, 0.0]);
        let solver = BrinkmanSolver::new(ops).unwrap();
        let sol = solver.solve(&f).unwrap();
        assert!(sol.velocity.iter().all(|v| v.abs() < 1e-11));
        for (k, p) in m.bulk.node_coords.iter().enumerate() {
            let exact = p[0] + 2.0 * p[1] - 1.5;
            assert!((sol.pressure[k] - exact).abs() < 1e-10);
        }
    }
}
