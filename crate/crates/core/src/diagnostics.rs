//! Energy, dissipation, masses and other functionals of field states.

use crate::brinkman::{assemble_flow_operators, FlowOperators};
use crate::cahnhilliard::{Discretization, FieldState, Mobility, ModelConfig};
use crate::error::{ChbError, Result};
use crate::potentials::{Potential, SchemePotential};
use crate::sparse::CsrMatrix;

/// Components of the free energy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyReport {
    pub bulk_grad: f64,
    pub bulk_pot: f64,
    pub surf_grad: f64,
    pub surf_pot: f64,
    pub robin: f64,
    pub total: f64,
    /// Quadrature points where an exact singular potential had to be clamped.
    pub clamp_violations: usize,
}

/// How potential densities are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialEval {
    /// The density the scheme uses (regularized and shifted for singular runs).
    Scheme,
    /// The original potential; logarithmic arguments clamped to `1 - 1e-12`,
    /// obstacle arguments to `[-1, 1]`, with every clamp counted.
    Exact,
}

const LOG_CLAMP: f64 = 1.0 - 1e-12;

fn density(sp: &SchemePotential, mode: PotentialEval, r: f64, violations: &mut usize) -> Result<f64> {
    match mode {
        PotentialEval::Scheme => sp.density(r),
        PotentialEval::Exact => match sp.potential {
            Potential::Logarithmic { .. } if r.abs() >= 1.0 => {
                *violations += 1;
                sp.potential.value(r.signum() * LOG_CLAMP)
            }
            Potential::DoubleObstacle if r.abs() > 1.0 => {
                *violations += 1;
                sp.potential.value(r.signum())
            }
            _ => sp.potential.value(r),
        },
    }
}

/// Free energy with the scheme's potential densities.
pub fn energy(disc: &Discretization, cfg: &ModelConfig, state: &FieldState) -> Result<EnergyReport> {
    energy_with(disc, cfg, state, PotentialEval::Scheme)
}

pub fn energy_with(disc: &Discretization, cfg: &ModelConfig, state: &FieldState, mode: PotentialEval) -> Result<EnergyReport> {
    let mut violations = 0usize;
    let bulk_grad = 0.5 * disc.stiffness.quadratic(&state.phi);
    let surf_grad = 0.5 * disc.surf_stiffness.quadratic(&state.psi);
    let bulk_pot = disc
        .bulk_quad
        .integrate(&state.phi, |r| density(&cfg.bulk, mode, r, &mut violations))?;
    let surf_pot = disc
        .surf_quad
        .integrate(&state.psi, |r| density(&cfg.surface, mode, r, &mut violations))?;
    let robin = if cfg.k > 0.0 {
        0.5 * cfg.sigma() * boundary_mismatch(disc, state).powi(2)
    } else {
        0.0
    };
    Ok(EnergyReport {
        bulk_grad,
        bulk_pot,
        surf_grad,
        surf_pot,
        robin,
        total: bulk_grad + bulk_pot + surf_grad + surf_pot + robin,
        clamp_violations: violations,
    })
}

/// `||psi - phi|_Gamma||` in the surface L2 norm.
pub fn boundary_mismatch(disc: &Discretization, state: &FieldState) -> f64 {
    let d: Vec<f64> = state
        .psi
        .iter()
        .zip(&disc.mesh.trace.forward)
        .map(|(s, &b)| s - state.phi[b])
        .collect();
    disc.surf_mass.quadratic(&d).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dissipation {
    pub viscous: f64,
    pub permeability: f64,
    pub friction: f64,
    pub bulk_mobility: f64,
    pub surf_mobility: f64,
}

impl Dissipation {
    pub fn total(&self) -> f64 {
        self.viscous + self.permeability + self.friction + self.bulk_mobility + self.surf_mobility
    }
}

pub fn dissipation_terms(ops: &FlowOperators, mobility: &Mobility, state: &FieldState) -> Dissipation {
    let v = &state.flow.velocity;
    Dissipation {
        viscous: ops.viscous.quadratic(v),
        permeability: ops.permeability.quadratic(v),
        friction: ops.friction.quadratic(v),
        bulk_mobility: mobility.bulk.quadratic(&state.mu),
        surf_mobility: mobility.surface.quadratic(&state.theta),
    }
}

/// One row of the per-step time series.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub energy: EnergyReport,
    pub mass_bulk: f64,
    pub mass_surf: f64,
    pub dissipation: Dissipation,
    /// `E^{n+1} - E^n + dt * total dissipation`
    pub balance_residual: f64,
    pub mismatch: f64,
    pub newton_iters: usize,
    pub newton_residual: f64,
    pub max_abs_phi: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 20] = [
        "step",
        "t",
        "energy_total",
        "energy_bulk_grad",
        "energy_bulk_pot",
        "energy_surf_grad",
        "energy_surf_pot",
        "energy_robin",
        "mass_bulk",
        "mass_surf",
        "diss_viscous",
        "diss_perm",
        "diss_friction",
        "diss_bulk_mob",
        "diss_surf_mob",
        "balance_residual",
        "mismatch",
        "newton_iters",
        "newton_residual",
        "max_abs_phi",
    ];

    /// Numeric values in [`Self::COLUMNS`] order.
    pub fn values(&self) -> [f64; 20] {
        let e = &self.energy;
        let d = &self.dissipation;
        [
            self.step as f64,
            self.t,
            e.total,
            e.bulk_grad,
            e.bulk_pot,
            e.surf_grad,
            e.surf_pot,
            e.robin,
            self.mass_bulk,
            self.mass_surf,
            d.viscous,
            d.permeability,
            d.friction,
            d.bulk_mobility,
            d.surf_mobility,
            self.balance_residual,
            self.mismatch,
            self.newton_iters as f64,
            self.newton_residual,
            self.max_abs_phi,
        ]
    }

    pub fn csv_row(&self) -> String {
        let v = self.values();
        let mut s = self.step.to_string();
        for (j, x) in v.iter().enumerate().skip(1) {
            s.push(',');
            if j == 17 {
                s.push_str(&self.newton_iters.to_string());
            } else {
                s.push_str(&format!("{x:.17e}"));
            }
        }
        s
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn initial_record(disc: &Discretization, cfg: &ModelConfig, state: &FieldState) -> Result<DiagnosticsRecord> {
    Ok(DiagnosticsRecord {
        step: 0,
        t: state.t,
        energy: energy(disc, cfg, state)?,
        mass_bulk: disc.bulk_mass(&state.phi),
        mass_surf: disc.surface_mass(&state.psi),
        dissipation: Dissipation::default(),
        balance_residual: 0.0,
        mismatch: boundary_mismatch(disc, state),
        newton_iters: 0,
        newton_residual: 0.0,
        max_abs_phi: max_abs(&state.phi),
    })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn step_record(
    disc: &Discretization,
    cfg: &ModelConfig,
    old: &FieldState,
    new: &FieldState,
    dt: f64,
    ops: &FlowOperators,
    mobility: &Mobility,
    newton_iters: usize,
    newton_residual: f64,
) -> Result<DiagnosticsRecord> {
    let e_old = energy(disc, cfg, old)?;
    let e_new = energy(disc, cfg, new)?;
    let diss = dissipation_terms(ops, mobility, new);
    Ok(DiagnosticsRecord {
        step: 0,
        t: new.t,
        energy: e_new,
        mass_bulk: disc.bulk_mass(&new.phi),
        mass_surf: disc.surface_mass(&new.psi),
        dissipation: diss,
        balance_residual: e_new.total - e_old.total + dt * diss.total(),
        mismatch: boundary_mismatch(disc, new),
        newton_iters,
        newton_residual,
        max_abs_phi: max_abs(&new.phi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceCheck {
    pub energy_change: f64,
    pub dissipation: Dissipation,
    /// `energy_change + dt * dissipation.total()`
    pub residual: f64,
}

/// Discrete energy balance between consecutive states, with coefficients as
/// the coupled scheme freezes them (flow at the old level, mobility at the new).
pub fn dissipation_check(
    disc: &Discretization,
    cfg: &ModelConfig,
    old: &FieldState,
    new: &FieldState,
    dt: f64,
) -> Result<BalanceCheck> {
    let ops = assemble_flow_operators(&disc.mesh, &disc.space, &old.phi, &old.psi, &cfg.coeffs)?;
    let mobility = Mobility {
        bulk: disc.weighted_bulk_stiffness(&new.phi, &cfg.coeffs.m_bulk)?,
        surface: disc.weighted_surface_stiffness(&new.psi, &cfg.coeffs.m_surf)?,
    };
    let d = dissipation_terms(&ops, &mobility, new);
    let de = energy(disc, cfg, new)?.total - energy(disc, cfg, old)?.total;
    Ok(BalanceCheck {
        energy_change: de,
        dissipation: d,
        residual: de + dt * d.total(),
    })
}

/// Differences between two states in the norms of the stability estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StabilityNorms {
    /// Bulk `H^1`
    pub phi: f64,
    /// Surface `H^1`
    pub psi: f64,
    pub mu: f64,
    pub theta: f64,
    /// Velocity `L^2`
    pub v: f64,
}

impl StabilityNorms {
    pub fn combined(&self) -> f64 {
        (self.phi.powi(2) + self.psi.powi(2) + self.mu.powi(2) + self.theta.powi(2) + self.v.powi(2)).sqrt()
    }
}

fn diff(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(ChbError::LengthMismatch { expected: a.len(), got: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

fn h1(mass: &CsrMatrix, stiff: &CsrMatrix, d: &[f64]) -> f64 {
    (mass.quadratic(d) + stiff.quadratic(d)).max(0.0).sqrt()
}

pub fn stability_norms(disc: &Discretization, a: &FieldState, b: &FieldState) -> Result<StabilityNorms> {
    if a.phi.len() != disc.n_bulk() || a.psi.len() != disc.n_surface() {
        return Err(ChbError::LengthMismatch {
            expected: disc.n_bulk(),
            got: a.phi.len(),
        });
    }
    let dphi = diff(&a.phi, &b.phi)?;
    let dpsi = diff(&a.psi, &b.psi)?;
    let dmu = diff(&a.mu, &b.mu)?;
    let dth = diff(&a.theta, &b.theta)?;
    let dv = diff(&a.flow.velocity, &b.flow.velocity)?;
    Ok(StabilityNorms {
        phi: h1(&disc.mass, &disc.stiffness, &dphi),
        psi: h1(&disc.surf_mass, &disc.surf_stiffness, &dpsi),
        mu: disc.mass.quadratic(&dmu).max(0.0).sqrt(),
        theta: disc.surf_mass.quadratic(&dth).max(0.0).sqrt(),
        v: disc.velocity_mass.quadratic(&dv).max(0.0).sqrt(),
    })
}

/// `(arclength, angle in degrees)` where the zero level set of `phi` meets the boundary.
///
/// The angle is measured between the boundary tangent oriented towards
/// `phi > 0` and the level-set direction pointing into the domain.
pub fn contact_angle(disc: &Discretization, state: &FieldState) -> Vec<(f64, f64)> {
    let mesh = &disc.mesh;
    let surf = &mesh.surface;
    let phi = &state.phi;
    let mut out = Vec::new();
    for k in 0..surf.n_nodes() {
        let kb = surf.next(k);
        let (a, b) = (surf.nodes[k], surf.nodes[kb]);
        let (fa, fb) = (phi[a], phi[b]);
        let crosses = (fa < 0.0 && fb >= 0.0) || (fa >= 0.0 && fb < 0.0);
        if !crosses {
            continue;
        }
        let Some(tri) = mesh
            .bulk
            .triangles
            .iter()
            .position(|t| t.contains(&a) && t.contains(&b))
        else {
            continue;
        };
        let g = mesh.bulk.barycentric_gradients(tri);
        let nodes = mesh.bulk.triangles[tri];
        let mut grad = [0.0; 2];
        for i in 0..3 {
            grad[0] += phi[nodes[i]] * g[i][0];
            grad[1] += phi[nodes[i]] * g[i][1];
        }
        let gn = grad[0].hypot(grad[1]);
        if gn == 0.0 {
            continue;
        }
        let t = surf.tangent(k);
        let sgn = if t[0] * grad[0] + t[1] * grad[1] >= 0.0 { 1.0 } else { -1.0 };
        let tau = [sgn * t[0], sgn * t[1]];
        let nrm = mesh.normals.edge_normals[k];
        let mut d = [-grad[1] / gn, grad[0] / gn];
        if d[0] * nrm[0] + d[1] * nrm[1] > 0.0 {
            d = [-d[0], -d[1]];
        }
        let c = (tau[0] * d[0] + tau[1] * d[1]).clamp(-1.0, 1.0);
        let s = fa / (fa - fb);
        out.push((surf.arclength[k] + s * surf.segment_lengths[k], c.acos().to_degrees()));
    }
    out
}
