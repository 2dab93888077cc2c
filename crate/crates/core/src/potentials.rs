//! Double-well potentials, their convex/concave splitting, and Moreau-Yosida
//! regularization of the convex part.
//!
//! Every potential is written as `F = beta_hat + pi_hat` with `beta_hat`
//! convex, lower semicontinuous, `beta_hat(0) = 0`, and `pi_hat` smooth with
//! Lipschitz derivative. The subdifferential `beta` of the convex part is a
//! [`MonotoneGraph`]; a [`YosidaGraph`] wraps one together with `eps`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Assumption, ChbError, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied monotone function with its primitive and derivative on an
/// open interval `(lo, hi)` (use infinities for all of R).
#[derive(Clone)]
pub struct CustomGraph {
    pub name: String,
    pub beta: ScalarFn,
    pub dbeta: ScalarFn,
    pub primitive: ScalarFn,
    pub domain: (f64, f64),
}

impl fmt::Debug for CustomGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomGraph")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .finish()
    }
}

/// Maximal monotone graphs with `0 in beta(0)`.
#[derive(Debug, Clone)]
pub enum MonotoneGraph {
    /// `beta(r) = slope * r`
    Linear { slope: f64 },
    /// `beta(r) = alpha * r^3`
    Cubic { alpha: f64 },
    /// `beta(r) = theta/2 * ln((1+r)/(1-r))` on `(-1, 1)`
    LogDerivative { theta: f64 },
    /// Subdifferential of the indicator of `[-1, 1]`.
    Obstacle,
    Custom(CustomGraph),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub closed: bool,
}

impl Interval {
    pub fn contains(&self, r: f64) -> bool {
        if self.closed {
            r >= self.lo && r <= self.hi
        } else {
            r > self.lo && r < self.hi
        }
    }

    pub fn contains_in_interior(&self, r: f64) -> bool {
        r > self.lo && r < self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        let lo_ok = self.lo > other.lo || (self.lo == other.lo && (other.closed || !self.closed));
        let hi_ok = self.hi < other.hi || (self.hi == other.hi && (other.closed || !self.closed));
        lo_ok && hi_ok
    }
}

const RESOLVENT_TOL: f64 = 1e-12;
const RESOLVENT_MAX_ITER: usize = 200;

impl MonotoneGraph {
    pub fn domain(&self) -> Interval {
        match self {
            MonotoneGraph::Linear { .. } | MonotoneGraph::Cubic { .. } => Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                closed: false,
            },
            MonotoneGraph::LogDerivative { .. } => Interval {
                lo: -1.0,
                hi: 1.0,
                closed: false,
            },
            MonotoneGraph::Obstacle => Interval {
                lo: -1.0,
                hi: 1.0,
                closed: true,
            },
            MonotoneGraph::Custom(c) => Interval {
                lo: c.domain.0,
                hi: c.domain.1,
                closed: false,
            },
        }
    }

    /// Element of least modulus of `beta(r)`, `None` outside `D(beta)`.
    pub fn min_section(&self, r: f64) -> Option<f64> {
        if !self.domain().contains(r) {
            return None;
        }
        Some(match self {
            MonotoneGraph::Linear { slope } => slope * r,
            MonotoneGraph::Cubic { alpha } => alpha * r * r * r,
            MonotoneGraph::LogDerivative { theta } => theta * r.atanh(),
            // beta(+-1) = [0, inf) / (-inf, 0]; least modulus is 0 everywhere
            MonotoneGraph::Obstacle => 0.0,
            MonotoneGraph::Custom(c) => (c.beta)(r),
        })
    }

    /// Derivative of the single-valued part (interior of the domain only).
    fn slope_at(&self, r: f64) -> f64 {
        match self {
            MonotoneGraph::Linear { slope } => *slope,
            MonotoneGraph::Cubic { alpha } => 3.0 * alpha * r * r,
            MonotoneGraph::LogDerivative { theta } => theta / (1.0 - r * r),
            MonotoneGraph::Obstacle => 0.0,
            MonotoneGraph::Custom(c) => (c.dbeta)(r),
        }
    }

    /// Convex primitive `beta_hat` (`+inf` outside the domain).
    pub fn primitive(&self, r: f64) -> f64 {
        if !self.domain().contains(r) {
            return f64::INFINITY;
        }
        match self {
            MonotoneGraph::Linear { slope } => 0.5 * slope * r * r,
            MonotoneGraph::Cubic { alpha } => 0.25 * alpha * r.powi(4),
            MonotoneGraph::LogDerivative { theta } => 0.5 * theta * log_entropy(r),
            MonotoneGraph::Obstacle => 0.0,
            MonotoneGraph::Custom(c) => (c.primitive)(r),
        }
    }

    pub fn with_eps(self, eps: f64) -> Result<YosidaGraph> {
        YosidaGraph::new(self, eps)
    }
}

/// `(1+s) ln(1+s) + (1-s) ln(1-s)`, continuous up to `|s| = 1`.
fn log_entropy(s: f64) -> f64 {
    let xlogx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
    xlogx(1.0 + s) + xlogx(1.0 - s)
}

/// A maximal monotone graph together with a Yosida parameter `eps in (0, 1)`.
#[derive(Debug, Clone)]
pub struct YosidaGraph {
    pub graph: MonotoneGraph,
    pub eps: f64,
}

impl YosidaGraph {
    pub fn new(graph: MonotoneGraph, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(ChbError::Config(format!("Yosida eps must lie in (0,1), got {eps}")));
        }
        Ok(Self { graph, eps })
    }

    /// `J_eps(r) = (I + eps beta)^{-1}(r)`.
    pub fn resolvent(&self, r: f64) -> Result<f64> {
        let eps = self.eps;
        match &self.graph {
            MonotoneGraph::Linear { slope } => Ok(r / (1.0 + eps * slope)),
            MonotoneGraph::Obstacle => Ok(r.clamp(-1.0, 1.0)),
            g => resolve_monotone(g, eps, r),
        }
    }

    /// `beta_eps(r) = (r - J_eps(r)) / eps`.
    pub fn yosida(&self, r: f64) -> Result<f64> {
        Ok((r - self.resolvent(r)?) / self.eps)
    }

    /// Derivative of `beta_eps` (a.e. for the obstacle graph).
    pub fn yosida_derivative(&self, r: f64) -> Result<f64> {
        let eps = self.eps;
        match &self.graph {
            MonotoneGraph::Obstacle => Ok(if r.abs() <= 1.0 { 0.0 } else { 1.0 / eps }),
            g => {
                let j = self.resolvent(r)?;
                let s = g.slope_at(j);
                if s.is_infinite() {
                    return Ok(1.0 / eps);
                }
                Ok(s / (1.0 + eps * s))
            }
        }
    }

    /// Moreau envelope `beta_hat(J) + |r - J|^2 / (2 eps)`.
    pub fn moreau_envelope(&self, r: f64) -> Result<f64> {
        let j = self.resolvent(r)?;
        let d = r - j;
        Ok(self.graph.primitive(j) + d * d / (2.0 * self.eps))
    }
}

/// Safeguarded Newton/bisection for `y + eps beta(y) = r`.
fn resolve_monotone(g: &MonotoneGraph, eps: f64, r: f64) -> Result<f64> {
    if r == 0.0 {
        return Ok(0.0);
    }
    let dom = g.domain();
    let h = |y: f64| -> f64 {
        if !dom.contains_in_interior(y) {
            return if y >= dom.hi { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        y + eps * g.min_section(y).unwrap_or(f64::NAN) - r
    };
    // The root lies between 0 and r (h(0) = -r and h(r) has the sign of r).
    let (mut lo, mut hi) = if r > 0.0 {
        (0.0, r.min(dom.hi))
    } else {
        (r.max(dom.lo), 0.0)
    };
    let tol = RESOLVENT_TOL * r.abs().max(1.0);
    let mut y = 0.5 * (lo + hi);
    let mut history = Vec::new();
    for _ in 0..RESOLVENT_MAX_ITER {
        let hy = h(y);
        history.push(hy);
        if hy.abs() <= tol {
            return Ok(y);
        }
        if hy > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
            return Ok(0.5 * (lo + hi));
        }
        let dh = 1.0 + eps * g.slope_at(y);
        let newton = y - hy / dh;
        y = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let tail = history.split_off(history.len().saturating_sub(5));
    Err(ChbError::solver(
        format!("resolvent did not converge for r = {r}, eps = {eps}"),
        tail,
    ))
}

/// Custom regular potential given through its splitting.
#[derive(Clone)]
pub struct CustomPotential {
    pub convex: CustomGraph,
    pub pi_hat: ScalarFn,
    pub pi: ScalarFn,
    pub dpi: ScalarFn,
    pub pi_lipschitz: f64,
    /// Growth exponent of the potential.
    pub growth: f64,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential")
            .field("convex", &self.convex)
            .field("pi_lipschitz", &self.pi_lipschitz)
            .field("growth", &self.growth)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum Potential {
    /// `alpha/4 (s^2 - 1)^2`
    Polynomial { alpha: f64 },
    /// Flory-Huggins `theta/2 [(1+s)ln(1+s) + (1-s)ln(1-s)] + theta_c/2 (1 - s^2)`
    Logarithmic { theta: f64, theta_c: f64 },
    /// `(1 - s^2)/2` on `[-1,1]`, `+inf` elsewhere.
    DoubleObstacle,
    CustomRegular(CustomPotential),
}

impl Potential {
    pub fn name(&self) -> &'static str {
        match self {
            Potential::Polynomial { .. } => "polynomial",
            Potential::Logarithmic { .. } => "logarithmic",
            Potential::DoubleObstacle => "obstacle",
            Potential::CustomRegular(_) => "custom",
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, Potential::Logarithmic { .. } | Potential::DoubleObstacle)
    }

    /// Subdifferential of the convex part.
    pub fn convex_graph(&self) -> MonotoneGraph {
        match self {
            Potential::Polynomial { alpha } => MonotoneGraph::Cubic { alpha: *alpha },
            Potential::Logarithmic { theta, .. } => MonotoneGraph::LogDerivative { theta: *theta },
            Potential::DoubleObstacle => MonotoneGraph::Obstacle,
            Potential::CustomRegular(c) => MonotoneGraph::Custom(c.convex.clone()),
        }
    }

    /// Smooth concave remainder `pi_hat`.
    pub fn pi_hat(&self, r: f64) -> f64 {
        match self {
            Potential::Polynomial { alpha } => alpha * (0.25 - 0.5 * r * r),
            Potential::Logarithmic { theta_c, .. } => 0.5 * theta_c * (1.0 - r * r),
            Potential::DoubleObstacle => 0.5 * (1.0 - r * r),
            Potential::CustomRegular(c) => (c.pi_hat)(r),
        }
    }

    /// `pi = pi_hat'`
    pub fn pi(&self, r: f64) -> f64 {
        match self {
            Potential::Polynomial { alpha } => -alpha * r,
            Potential::Logarithmic { theta_c, .. } => -theta_c * r,
            Potential::DoubleObstacle => -r,
            Potential::CustomRegular(c) => (c.pi)(r),
        }
    }

    pub fn dpi(&self, r: f64) -> f64 {
        match self {
            Potential::Polynomial { alpha } => -alpha,
            Potential::Logarithmic { theta_c, .. } => -theta_c,
            Potential::DoubleObstacle => -1.0,
            Potential::CustomRegular(c) => (c.dpi)(r),
        }
    }

    pub fn pi_lipschitz(&self) -> f64 {
        match self {
            Potential::Polynomial { alpha } => *alpha,
            Potential::Logarithmic { theta_c, .. } => *theta_c,
            Potential::DoubleObstacle => 1.0,
            Potential::CustomRegular(c) => c.pi_lipschitz,
        }
    }

    fn check_domain(&self, r: f64, derivative: bool) -> Result<()> {
        match self {
            Potential::Logarithmic { .. } if r.abs() >= 1.0 => Err(ChbError::OutsideDomain {
                what: "logarithmic potential",
                arg: r,
            }),
            Potential::DoubleObstacle if derivative => Err(ChbError::Unsupported(
                "double-obstacle potential has no derivative; use a YosidaGraph".into(),
            )),
            Potential::DoubleObstacle if r.abs() > 1.0 => Err(ChbError::OutsideDomain {
                what: "double-obstacle potential",
                arg: r,
            }),
            _ => Ok(()),
        }
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        self.check_domain(r, false)?;
        Ok(match self {
            Potential::Polynomial { alpha } => 0.25 * alpha * (r * r - 1.0).powi(2),
            _ => self.convex_graph().primitive(r) + self.pi_hat(r),
        })
    }

    pub fn derivative(&self, r: f64) -> Result<f64> {
        self.check_domain(r, true)?;
        Ok(match self {
            Potential::Polynomial { alpha } => alpha * r * (r * r - 1.0),
            _ => self.convex_graph().min_section(r).unwrap_or(f64::NAN) + self.pi(r),
        })
    }

    pub fn second_derivative(&self, r: f64) -> Result<f64> {
        self.check_domain(r, true)?;
        Ok(match self {
            Potential::Polynomial { alpha } => alpha * (3.0 * r * r - 1.0),
            _ => self.convex_graph().slope_at(r) + self.dpi(r),
        })
    }

    /// `(F, F', F'')`.
    pub fn eval(&self, r: f64) -> Result<(f64, f64, f64)> {
        Ok((self.value(r)?, self.derivative(r)?, self.second_derivative(r)?))
    }
}

/// A potential as used by the time stepper: the convex part is either exact
/// (regular potentials) or replaced by its Moreau envelope.
#[derive(Debug, Clone)]
pub struct SchemePotential {
    pub potential: Potential,
    pub yosida: Option<YosidaGraph>,
    /// Constant added so the regularized density is nonnegative.
    pub shift: f64,
}

impl SchemePotential {
    pub fn regular(potential: Potential) -> Result<Self> {
        if potential.is_singular() {
            return Err(ChbError::Config(format!(
                "{} potential requires singular mode with a Yosida eps",
                potential.name()
            )));
        }
        Ok(Self {
            potential,
            yosida: None,
            shift: 0.0,
        })
    }

    pub fn regularized(potential: Potential, eps: f64) -> Result<Self> {
        let yosida = YosidaGraph::new(potential.convex_graph(), eps)?;
        let mut sp = Self {
            potential,
            yosida: Some(yosida),
            shift: 0.0,
        };
        sp.shift = sp.nonnegativity_shift()?;
        Ok(sp)
    }

    /// `beta` (or `beta_eps`) at `r`.
    pub fn convex_derivative(&self, r: f64) -> Result<f64> {
        match &self.yosida {
            Some(y) => y.yosida(r),
            None => Ok(self.potential.convex_graph().min_section(r).unwrap_or(f64::NAN)),
        }
    }

    pub fn convex_second_derivative(&self, r: f64) -> Result<f64> {
        match &self.yosida {
            Some(y) => y.yosida_derivative(r),
            None => Ok(self.potential.convex_graph().slope_at(r)),
        }
    }

    pub fn convex_value(&self, r: f64) -> Result<f64> {
        match &self.yosida {
            Some(y) => y.moreau_envelope(r),
            None => Ok(self.potential.convex_graph().primitive(r)),
        }
    }

    /// Energy density `F` (or `F_eps + shift`).
    pub fn density(&self, r: f64) -> Result<f64> {
        match (&self.yosida, &self.potential) {
            (None, Potential::Polynomial { .. }) => self.potential.value(r),
            _ => Ok(self.convex_value(r)? + self.potential.pi_hat(r) + self.shift),
        }
    }

    pub fn pi(&self, r: f64) -> f64 {
        self.potential.pi(r)
    }

    /// `-inf F_eps` when negative, found by a grid scan plus golden-section refinement.
    fn nonnegativity_shift(&self) -> Result<f64> {
        let f = |r: f64| -> Result<f64> { Ok(self.convex_value(r)? + self.potential.pi_hat(r)) };
        let (lo, hi, m) = (-8.0, 8.0, 3200usize);
        let dr = (hi - lo) / m as f64;
        let mut best = (0.0, f(0.0)?);
        for k in 0..=m {
            let r = lo + k as f64 * dr;
            let v = f(r)?;
            if v < best.1 {
                best = (r, v);
            }
        }
        let (mut a, mut b) = (best.0 - dr, best.0 + dr);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c)? < f(d)? {
                b = d;
            } else {
                a = c;
            }
        }
        let min = f(0.5 * (a + b))?.min(best.1);
        Ok(if min < 0.0 { -min } else { 0.0 })
    }
}

/// Bulk and surface potentials.
#[derive(Debug, Clone)]
pub struct PotentialPair {
    pub bulk: Potential,
    pub surface: Potential,
}

#[derive(Debug, Clone)]
pub struct DominationReport {
    pub kappa1: f64,
    pub kappa2: f64,
    pub pass: bool,
    /// Sample with the largest violation `|b| - (k1 |b_G| + k2)`.
    pub worst_sample: Option<f64>,
    pub worst_excess: f64,
    /// Samples in D(beta_Gamma) but outside D(beta).
    pub domain_violations: usize,
}

/// Checks `|beta(r)| <= k1 |beta_G(r)| + k2` on the samples.
///
/// With `eps = None` the minimal sections are compared on `D(beta_G)` and
/// the inclusion `D(beta_G) subset D(beta)` is checked at every sample; with
/// `Some(eps)` the Yosida approximations are compared on all samples.
pub fn check_domination(
    bulk: &MonotoneGraph,
    surface: &MonotoneGraph,
    eps: Option<f64>,
    samples: &[f64],
    kappa1: f64,
    kappa2: f64,
) -> Result<DominationReport> {
    if samples.is_empty() {
        return Err(ChbError::Config("domination check needs samples".into()));
    }
    let mut report = DominationReport {
        kappa1,
        kappa2,
        pass: true,
        worst_sample: None,
        worst_excess: f64::NEG_INFINITY,
        domain_violations: 0,
    };
    let yos = match eps {
        Some(e) => Some((
            YosidaGraph::new(bulk.clone(), e)?,
            YosidaGraph::new(surface.clone(), e)?,
        )),
        None => None,
    };
    if yos.is_none() && !surface.domain().is_subset_of(&bulk.domain()) {
        report.pass = false;
    }
    for &r in samples {
        let (b, s) = match &yos {
            Some((yb, ys)) => (yb.yosida(r)?, ys.yosida(r)?),
            None => {
                let Some(s) = surface.min_section(r) else {
                    continue;
                };
                match bulk.min_section(r) {
                    Some(b) => (b, s),
                    None => {
                        report.domain_violations += 1;
                        report.pass = false;
                        if report.worst_excess < f64::INFINITY {
                            report.worst_excess = f64::INFINITY;
                            report.worst_sample = Some(r);
                        }
                        continue;
                    }
                }
            }
        };
        let excess = b.abs() - (kappa1 * s.abs() + kappa2);
        if excess > report.worst_excess {
            report.worst_excess = excess;
            report.worst_sample = Some(r);
        }
        if excess > 0.0 {
            report.pass = false;
        }
    }
    Ok(report)
}

/// Errors unless the pair satisfies the domination condition on the samples.
pub fn validate_domination(
    pair: &PotentialPair,
    samples: &[f64],
    kappa1: f64,
    kappa2: f64,
) -> Result<DominationReport> {
    let rep = check_domination(
        &pair.bulk.convex_graph(),
        &pair.surface.convex_graph(),
        None,
        samples,
        kappa1,
        kappa2,
    )?;
    if !rep.pass {
        return Err(ChbError::assumption(
            Assumption::Domination,
            format!(
                "bulk {} vs surface {} with kappa1 = {kappa1}, kappa2 = {kappa2}: worst sample r = {:?} (excess {:.3e}, {} samples outside D(beta))",
                pair.bulk.name(),
                pair.surface.name(),
                rep.worst_sample,
                rep.worst_excess,
                rep.domain_violations
            ),
        ));
    }
    Ok(rep)
}

/// Uniform samples in the domain used to check domination for a surface graph.
pub fn domination_samples(surface: &MonotoneGraph, count: usize) -> Vec<f64> {
    let dom = surface.domain();
    let (lo, hi) = if dom.lo.is_finite() && dom.hi.is_finite() {
        if dom.closed {
            (dom.lo, dom.hi)
        } else {
            let w = dom.hi - dom.lo;
            (dom.lo + 5e-4 * w, dom.hi - 5e-4 * w)
        }
    } else {
        (-3.0, 3.0)
    };
    (0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1).max(1) as f64)
        .collect()
}

/// Largest `r^2 - beta_hat_eps(r)` over the grid: the observed `C_1` in
/// `beta_hat_eps(r) >= r^2 - C_1`.
pub fn coercivity_constant(graph: &MonotoneGraph, eps: f64, grid: &[f64]) -> Result<f64> {
    let y = YosidaGraph::new(graph.clone(), eps)?;
    let mut c = f64::NEG_INFINITY;
    for &r in grid {
        c = c.max(r * r - y.moreau_envelope(r)?);
    }
    Ok(c)
}

/// Worst observed violations of the Yosida properties; every field is `<= 0`
/// when the property holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct YosidaPropertyReport {
    pub samples: usize,
    pub eps: Vec<f64>,
    /// `-min beta_hat_eps`
    pub negative_envelope: f64,
    /// `max (beta_hat_eps - beta_hat)` over samples where `beta_hat` is finite.
    pub envelope_above_primitive: f64,
    /// `max (beta_hat_eps2 - beta_hat_eps1)` over `eps1 < eps2`.
    pub envelope_not_monotone_in_eps: f64,
    /// `max (|beta_eps| - |beta°|)` on `D(beta)`.
    pub section_bound: f64,
    /// `max (slope - 1/eps)` over neighbouring sorted samples.
    pub lipschitz_excess: f64,
    /// `-min slope`
    pub decreasing: f64,
}

impl YosidaPropertyReport {
    /// All envelope and section checks within `roundoff`, Lipschitz within `lip_tol`.
    pub fn pass(&self, roundoff: f64, lip_tol: f64) -> bool {
        self.negative_envelope <= roundoff
            && self.envelope_above_primitive <= roundoff
            && self.envelope_not_monotone_in_eps <= roundoff
            && self.section_bound <= roundoff
            && self.decreasing <= roundoff
            && self.lipschitz_excess <= lip_tol
    }
}

pub fn yosida_properties(graph: &MonotoneGraph, eps: &[f64], samples: &[f64]) -> Result<YosidaPropertyReport> {
    if samples.len() < 2 || eps.is_empty() {
        return Err(ChbError::Config("Yosida property check needs samples and eps values".into()));
    }
    let mut r: Vec<f64> = samples.to_vec();
    r.sort_by(f64::total_cmp);
    let mut eps_sorted = eps.to_vec();
    eps_sorted.sort_by(f64::total_cmp);
    let mut rep = YosidaPropertyReport {
        samples: r.len(),
        eps: eps_sorted.clone(),
        negative_envelope: f64::NEG_INFINITY,
        envelope_above_primitive: f64::NEG_INFINITY,
        envelope_not_monotone_in_eps: f64::NEG_INFINITY,
        section_bound: f64::NEG_INFINITY,
        lipschitz_excess: f64::NEG_INFINITY,
        decreasing: f64::NEG_INFINITY,
    };
    let mut prev_env: Option<Vec<f64>> = None;
    for &e in &eps_sorted {
        let y = YosidaGraph::new(graph.clone(), e)?;
        let env = r.iter().map(|&x| y.moreau_envelope(x)).collect::<Result<Vec<_>>>()?;
        let be = r.iter().map(|&x| y.yosida(x)).collect::<Result<Vec<_>>>()?;
        for (i, &x) in r.iter().enumerate() {
            rep.negative_envelope = rep.negative_envelope.max(-env[i]);
            let p = graph.primitive(x);
            if p.is_finite() {
                rep.envelope_above_primitive = rep.envelope_above_primitive.max(env[i] - p);
            }
            if let Some(b0) = graph.min_section(x) {
                rep.section_bound = rep.section_bound.max(be[i].abs() - b0.abs());
            }
            if let Some(smaller) = &prev_env {
                rep.envelope_not_monotone_in_eps = rep.envelope_not_monotone_in_eps.max(env[i] - smaller[i]);
            }
        }
        for i in 1..r.len() {
            let slope = (be[i] - be[i - 1]) / (r[i] - r[i - 1]);
            rep.lipschitz_excess = rep.lipschitz_excess.max(slope - 1.0 / e);
            rep.decreasing = rep.decreasing.max(-slope);
        }
        prev_env = Some(env);
    }
    Ok(rep)
}

/// Geometric schedule `2^-1, ..., 2^-k`.
pub fn eps_schedule(k: u32) -> Vec<f64> {
    (1..=k).map(|i| 0.5f64.powi(i as i32)).collect()
}
