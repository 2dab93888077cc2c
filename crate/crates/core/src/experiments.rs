//! Parameter campaigns: K sweep, Yosida eps sweep, continuous dependence,
//! manufactured-solution battery and the spinodal dispersion check.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::brinkman::{brinkman_mms, CoefficientFn};
use crate::cahnhilliard::{
    state_from_phase, Discretization, FieldInit, FieldState, InitialData, ModelConfig, RunSink, Simulator, SurfaceInit,
};
use crate::diagnostics::{stability_norms, DiagnosticsRecord};
use crate::elliptic::{elliptic_mms, ExactField};
use crate::error::{Assumption, ChbError, Result};
use crate::io::{fmt_f, DirectorySink, Table};
use crate::potentials::SchemePotential;

/// Environment variable holding the number of sweep workers.
pub const WORKERS_ENV: &str = "CHB_WORKERS";

/// Everything needed to reproduce one run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub n: usize,
    pub model: ModelConfig,
    pub init: InitialData,
    pub fields_every: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: FieldState,
    pub steps: usize,
    pub rejected_steps: usize,
}

struct NoObserver;

impl RunSink for NoObserver {
    fn record(&mut self, _rec: &DiagnosticsRecord) -> Result<()> {
        Ok(())
    }
}

struct Fanout<'a> {
    dir: Option<DirectorySink>,
    records: Vec<DiagnosticsRecord>,
    extra: &'a mut dyn RunSink,
}

impl RunSink for Fanout<'_> {
    fn record(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        if let Some(d) = &mut self.dir {
            d.record(rec)?;
        }
        self.records.push(rec.clone());
        self.extra.record(rec)
    }

    fn snapshot(&mut self, step: usize, state: &FieldState, disc: &Discretization) -> Result<()> {
        if let Some(d) = &mut self.dir {
            d.snapshot(step, state, disc)?;
        }
        self.extra.snapshot(step, state, disc)
    }

    fn observe(&mut self, step: usize, state: &FieldState, disc: &Discretization) -> Result<()> {
        self.extra.observe(step, state, disc)
    }
}

/// Runs `spec`, writing `timeseries.csv` (and VTK snapshots) when `dir` is given.
pub fn execute(spec: &RunSpec, dir: Option<&Path>) -> Result<RunOutput> {
    execute_observed(spec, dir, &mut NoObserver)
}

pub fn execute_observed(spec: &RunSpec, dir: Option<&Path>, observer: &mut dyn RunSink) -> Result<RunOutput> {
    let sim = Simulator::new(spec.n, spec.model.clone())?;
    let s0 = sim.initial_state(&spec.init)?;
    execute_from(&sim, s0, spec.fields_every, dir, observer)
}

fn execute_from(
    sim: &Simulator,
    s0: FieldState,
    fields_every: Option<usize>,
    dir: Option<&Path>,
    observer: &mut dyn RunSink,
) -> Result<RunOutput> {
    let mut sink = Fanout {
        dir: dir.map(DirectorySink::create).transpose()?,
        records: Vec::new(),
        extra: observer,
    };
    let res = sim.run(s0, &mut sink, if dir.is_some() { fields_every } else { None })?;
    if let Some(d) = sink.dir.take() {
        d.finish()?;
    }
    Ok(RunOutput {
        records: sink.records,
        final_state: res.final_state,
        steps: res.steps,
        rejected_steps: res.rejected_steps,
    })
}

/// Thread pool sized by `CHB_WORKERS` (all cores when unset).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| ChbError::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(ChbError::Config(format!("{WORKERS_ENV} must be positive")));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| ChbError::Config(format!("thread pool: {e}")))
}

fn fan_out<T: Send>(items: Vec<T>, f: impl Fn(T) -> Result<RunRow> + Sync + Send) -> Result<Vec<RunRow>> {
    worker_pool()?.install(|| items.into_par_iter().map(f).collect())
}

/// `run_<name>_<value>` directory under `out`.
pub fn run_dir(out: Option<&Path>, name: &str, value: f64) -> Option<PathBuf> {
    out.map(|o| o.join(format!("run_{name}_{value:e}")))
}

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 4;

pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() {
        return Err(ChbError::LengthMismatch { expected: x.len(), got: y.len() });
    }
    if x.len() < MIN_FIT_POINTS {
        return Err(ChbError::Config(format!(
            "slope fit needs at least {MIN_FIT_POINTS} points, got {}",
            x.len()
        )));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(ChbError::Domain(format!("log-log fit of nonpositive value {v}")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly)?;
    let m = lx.len() as f64;
    let ss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    Ok(LogLogFit {
        slope,
        intercept,
        residual: (ss / m).sqrt(),
        points: lx.len(),
    })
}

/// Ordinary least squares `y = a x + b`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(ChbError::Config("fit abscissae are all identical".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            pass,
            detail,
        }
    }
}

/// Per-run scalars keyed by the swept parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub param: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameter: String,
    pub columns: Vec<String>,
    pub rows: Vec<RunRow>,
    pub fit: Option<LogLogFit>,
    pub checks: Vec<Check>,
}

impl SweepResult {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[j]).collect())
    }

    pub fn summary_table(&self) -> Table {
        let mut cols = vec![self.parameter.as_str()];
        cols.extend(self.columns.iter().map(String::as_str));
        let mut t = Table::new(&cols);
        for r in &self.rows {
            let mut row = vec![fmt_f(r.param)];
            row.extend(r.values.iter().map(|v| fmt_f(*v)));
            t.push(row);
        }
        t
    }

    pub fn fit_table(&self) -> Table {
        let mut t = Table::new(&["parameter", "slope", "intercept", "residual", "points"]);
        if let Some(f) = &self.fit {
            t.push(vec![
                self.parameter.clone(),
                fmt_f(f.slope),
                fmt_f(f.intercept),
                fmt_f(f.residual),
                f.points.to_string(),
            ]);
        }
        t
    }

    pub fn checks_table(&self) -> Table {
        checks_table(&self.checks)
    }

    /// Writes `summary.csv`, `fit.csv` and `checks.csv`.
    pub fn write(&self, out: &Path) -> Result<()> {
        self.summary_table().write(&out.join("summary.csv"))?;
        self.fit_table().write(&out.join("fit.csv"))?;
        self.checks_table().write(&out.join("checks.csv"))
    }
}

pub fn checks_table(checks: &[Check]) -> Table {
    let mut t = Table::new(&["check", "pass", "detail"]);
    for c in checks {
        t.push(vec![c.name.clone(), c.pass.to_string(), format!("\"{}\"", c.detail.replace('"', "'"))]);
    }
    t
}

fn strictly_descending(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] > w[1])
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

/// Summary of a single run.
pub fn run_summary(disc_area: f64, perimeter: f64, out: &RunOutput) -> Table {
    let mut t = Table::new(&[
        "steps",
        "rejected_steps",
        "t_final",
        "energy_initial",
        "energy_final",
        "mass_bulk_drift",
        "mass_surf_drift",
        "max_balance_residual",
        "max_mismatch",
        "max_abs_phi",
        "state_hash",
    ]);
    let r0 = &out.records[0];
    let last = out.records.last().unwrap_or(r0);
    let db = max_of(out.records.iter().map(|r| (r.mass_bulk - r0.mass_bulk).abs())) / disc_area;
    let ds = max_of(out.records.iter().map(|r| (r.mass_surf - r0.mass_surf).abs())) / perimeter;
    t.push(vec![
        out.steps.to_string(),
        out.rejected_steps.to_string(),
        fmt_f(out.final_state.t),
        fmt_f(r0.energy.total),
        fmt_f(last.energy.total),
        fmt_f(db),
        fmt_f(ds),
        fmt_f(out.records.iter().skip(1).map(|r| r.balance_residual).fold(f64::NEG_INFINITY, f64::max).max(0.0)),
        fmt_f(max_of(out.records.iter().map(|r| r.mismatch))),
        fmt_f(max_of(out.records.iter().map(|r| r.max_abs_phi))),
        out.final_state.hash(),
    ]);
    t
}

/// Mismatch versus `K`; `ks` must be positive, strictly descending and at least four long.
pub fn sweep_k(base: &RunSpec, ks: &[f64], include_zero: bool, out: Option<&Path>) -> Result<SweepResult> {
    if ks.len() < MIN_FIT_POINTS {
        return Err(ChbError::Config(format!("sweep-k needs at least {MIN_FIT_POINTS} K values")));
    }
    if ks.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
        return Err(ChbError::Config("sweep-k values must be positive".into()));
    }
    if !strictly_descending(ks) {
        return Err(ChbError::Config("sweep-k values must be distinct and descending".into()));
    }
    let mut list = ks.to_vec();
    if include_zero {
        list.push(0.0);
    }
    let rows = fan_out(list, |k| {
        let mut spec = base.clone();
        spec.model.k = k;
        spec.init.psi = SurfaceInit::Trace;
        let o = execute(&spec, run_dir(out, "K", k).as_deref())?;
        let last = o.records.last().unwrap();
        Ok(RunRow {
            param: k,
            values: vec![
                max_of(o.records.iter().map(|r| r.mismatch)),
                last.mismatch,
                last.energy.total,
                o.steps as f64,
            ],
        })
    })?;
    let (pos, zero): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r.param > 0.0);
    let xs: Vec<f64> = pos.iter().map(|r| r.param).collect();
    let ys: Vec<f64> = pos.iter().map(|r| r.values[0]).collect();
    let fit = loglog_fit(&xs, &ys)?;
    let mut checks = vec![
        Check::new(
            "slope_at_least_0.35",
            fit.slope >= 0.35,
            format!(
                "fitted slope {:.4} (residual {:.3e}); {} the sqrt(K) band [0.35, 0.65]",
                fit.slope,
                fit.residual,
                if fit.slope > 0.65 { "faster than" } else if fit.slope >= 0.35 { "inside" } else { "below" }
            ),
        ),
    ];
    if let Some(z) = zero.first() {
        checks.push(Check::new(
            "k0_mismatch_zero",
            z.values[0] == 0.0,
            format!("K=0 sup mismatch {:e}", z.values[0]),
        ));
    }
    Ok(SweepResult {
        parameter: "K".into(),
        columns: ["sup_mismatch", "final_mismatch", "energy_final", "steps"].map(String::from).to_vec(),
        rows,
        fit: Some(fit),
        checks,
    })
}

struct EpsObserver {
    bulk: SchemePotential,
    excess: f64,
    surf_excess: f64,
    max_abs: f64,
    trajectory: Vec<(f64, f64)>,
}

fn excess_over(sp: &SchemePotential, r: f64) -> f64 {
    let d = sp.potential.convex_graph().domain();
    (d.lo - r).max(r - d.hi).max(0.0)
}

impl RunSink for EpsObserver {
    fn record(&mut self, _rec: &DiagnosticsRecord) -> Result<()> {
        Ok(())
    }

    fn observe(&mut self, _step: usize, state: &FieldState, disc: &Discretization) -> Result<()> {
        for &p in &state.phi {
            self.excess = self.excess.max(excess_over(&self.bulk, p));
            self.max_abs = self.max_abs.max(p.abs());
        }
        for &p in &state.psi {
            self.surf_excess = self.surf_excess.max(excess_over(&self.bulk, p));
        }
        let b = disc.bulk_quad.integrate(&state.phi, |s| self.bulk.convex_value(s))?;
        self.trajectory.push((state.t, b));
        Ok(())
    }
}

/// Yosida parameter sweep for singular potentials.
pub fn sweep_eps(base: &RunSpec, eps: &[f64], out: Option<&Path>) -> Result<SweepResult> {
    if base.model.bulk.yosida.is_none() || base.model.surface.yosida.is_none() {
        return Err(ChbError::Config("sweep-eps needs potential.mode = singular".into()));
    }
    if eps.len() < MIN_FIT_POINTS {
        return Err(ChbError::Config(format!("sweep-eps needs at least {MIN_FIT_POINTS} eps values")));
    }
    if eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) || !strictly_descending(eps) {
        return Err(ChbError::Config("sweep-eps values must lie in (0,1) and descend".into()));
    }
    let rows = fan_out(eps.to_vec(), |e| {
        let mut spec = base.clone();
        spec.model.bulk = SchemePotential::regularized(base.model.bulk.potential.clone(), e)?;
        spec.model.surface = SchemePotential::regularized(base.model.surface.potential.clone(), e)?;
        let mut obs = EpsObserver {
            bulk: spec.model.bulk.clone(),
            excess: 0.0,
            surf_excess: 0.0,
            max_abs: 0.0,
            trajectory: Vec::new(),
        };
        let dir = run_dir(out, "eps", e);
        let o = execute_observed(&spec, dir.as_deref(), &mut obs)?;
        if let Some(d) = &dir {
            let mut t = Table::new(&["t", "integral_beta_hat_eps"]);
            for (tt, b) in &obs.trajectory {
                t.push(vec![fmt_f(*tt), fmt_f(*b)]);
            }
            t.write(&d.join("beta_hat.csv"))?;
        }
        let last = o.records.last().unwrap();
        Ok(RunRow {
            param: e,
            values: vec![
                obs.excess,
                obs.surf_excess,
                obs.max_abs,
                obs.trajectory.last().map(|v| v.1).unwrap_or(0.0),
                max_of(obs.trajectory.iter().map(|v| v.1)),
                last.energy.total,
                o.steps as f64,
            ],
        })
    })?;
    let ex: Vec<f64> = rows.iter().map(|r| r.values[0]).collect();
    let monotone = ex.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let mut checks = vec![Check::new(
        "excess_nonincreasing",
        monotone,
        format!("sup excess over the domain closure per eps: {ex:?}"),
    )];
    let last = rows.last().unwrap();
    let graph = base.model.bulk.potential.convex_graph();
    match graph {
        crate::potentials::MonotoneGraph::Obstacle => checks.push(Check::new(
            "excess_smallest_eps_le_0.05",
            last.values[0] <= 0.05,
            format!("excess {:.4e} at eps = {:e}", last.values[0], last.param),
        )),
        crate::potentials::MonotoneGraph::LogDerivative { .. } => checks.push(Check::new(
            "strictly_inside",
            last.values[2] < 1.0,
            format!("max |phi| {:.6} at eps = {:e}", last.values[2], last.param),
        )),
        _ => {}
    }
    let pos: Vec<&RunRow> = rows.iter().filter(|r| r.values[0] > 0.0).collect();
    let fit = if pos.len() >= MIN_FIT_POINTS {
        Some(loglog_fit(
            &pos.iter().map(|r| r.param).collect::<Vec<_>>(),
            &pos.iter().map(|r| r.values[0]).collect::<Vec<_>>(),
        )?)
    } else {
        None
    };
    Ok(SweepResult {
        parameter: "eps".into(),
        columns: [
            "sup_excess",
            "sup_surface_excess",
            "sup_abs_phi",
            "integral_beta_hat_final",
            "integral_beta_hat_max",
            "energy_final",
            "steps",
        ]
        .map(String::from)
        .to_vec(),
        rows,
        fit,
        checks,
    })
}

struct StateLog(Vec<FieldState>);

impl RunSink for StateLog {
    fn record(&mut self, _rec: &DiagnosticsRecord) -> Result<()> {
        Ok(())
    }

    fn observe(&mut self, _step: usize, state: &FieldState, _disc: &Discretization) -> Result<()> {
        self.0.push(state.clone());
        Ok(())
    }
}

/// Paired runs from `phi_0` and `phi_0 + delta eta`; ratio of the largest
/// trajectory distance to the initial-data distance.
pub fn stability_experiment(base: &RunSpec, deltas: &[f64], eta: &FieldInit, out: Option<&Path>) -> Result<SweepResult> {
    if !base.model.coeffs.all_constant_for_stability() {
        return Err(ChbError::assumption(
            Assumption::ConstantCoefficients,
            "nu, M_Omega and M_Gamma must reduce to positive constants",
        ));
    }
    if deltas.len() < 3 {
        return Err(ChbError::Config("stability needs at least 3 perturbation sizes".into()));
    }
    let deltas: Vec<f64> = deltas.iter().copied().filter(|d| *d != 0.0).collect();
    if deltas.len() < 3 || !strictly_descending(&deltas) || deltas.iter().any(|d| *d < 0.0) {
        return Err(ChbError::Config("stability deltas must be positive and descending".into()));
    }
    let sim = Simulator::new(base.n, base.model.clone())?;
    let s0 = sim.initial_state(&base.init)?;
    // separate stream so a noisy eta does not repeat the initial data
    let mut rng = ChaCha8Rng::seed_from_u64(base.init.seed ^ 0x9e37_79b9_7f4a_7c15);
    let eta_b = eta.sample(&sim.disc.mesh.bulk.node_coords, &mut rng);
    let eta_s = sim.disc.trace(&eta_b);

    let mut reference = StateLog(Vec::new());
    let dir = out.map(|o| o.join("run_reference"));
    execute_from(&sim, s0.clone(), base.fields_every, dir.as_deref(), &mut reference)?;
    let reference = reference.0;

    let rows = fan_out(deltas.clone(), |d| {
        let phi: Vec<f64> = s0.phi.iter().zip(&eta_b).map(|(a, e)| a + d * e).collect();
        let psi: Vec<f64> = if sim.cfg.is_dirichlet() {
            sim.disc.trace(&phi)
        } else {
            s0.psi.iter().zip(&eta_s).map(|(a, e)| a + d * e).collect()
        };
        let p0 = state_from_phase(&sim.disc, &sim.cfg, 0.0, phi, psi)?;
        let dphi: Vec<f64> = p0.phi.iter().zip(&s0.phi).map(|(a, b)| a - b).collect();
        let dpsi: Vec<f64> = p0.psi.iter().zip(&s0.psi).map(|(a, b)| a - b).collect();
        let init_dist = (sim.disc.mass.quadratic(&dphi)
            + sim.disc.stiffness.quadratic(&dphi)
            + sim.disc.surf_mass.quadratic(&dpsi)
            + sim.disc.surf_stiffness.quadratic(&dpsi))
        .sqrt();
        let mut log = StateLog(Vec::new());
        execute_from(&sim, p0, base.fields_every, run_dir(out, "delta", d).as_deref(), &mut log)?;
        if log.0.len() != reference.len() {
            return Err(ChbError::solver(
                format!("perturbed run with delta = {d} took a different step sequence"),
                vec![],
            ));
        }
        let mut sup = 0.0f64;
        for (a, b) in log.0.iter().zip(&reference) {
            sup = sup.max(stability_norms(&sim.disc, a, b)?.combined());
        }
        Ok(RunRow {
            param: d,
            values: vec![init_dist, sup, sup / init_dist],
        })
    })?;
    let mut checks = Vec::new();
    for w in rows.windows(2) {
        let (r0, r1) = (w[0].values[2], w[1].values[2]);
        checks.push(Check::new(
            &format!("ratio_bounded_{:e}", w[1].param),
            r1 <= 1.5 * r0,
            format!("R({:e}) = {r1:.6} vs 1.5 R({:e}) = {:.6}", w[1].param, w[0].param, 1.5 * r0),
        ));
    }
    Ok(SweepResult {
        parameter: "delta".into(),
        columns: ["initial_distance", "sup_distance", "ratio"].map(String::from).to_vec(),
        rows,
        fit: None,
        checks,
    })
}

/// One line of the convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsEntry {
    pub problem: String,
    pub n: usize,
    pub h: f64,
    pub error: f64,
    /// Surface error (elliptic) or pressure error (flow).
    pub secondary: f64,
    /// Order against the previous level; NaN on the coarsest.
    pub order: f64,
    pub secondary_order: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsReport {
    pub entries: Vec<MmsEntry>,
    pub checks: Vec<Check>,
}

impl MmsReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["problem", "n", "h", "error_l2", "secondary_l2", "order", "secondary_order"]);
        for e in &self.entries {
            t.push(vec![
                e.problem.clone(),
                e.n.to_string(),
                fmt_f(e.h),
                fmt_f(e.error),
                fmt_f(e.secondary),
                fmt_f(e.order),
                fmt_f(e.secondary_order),
            ]);
        }
        t
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        self.table().write(&out.join("summary.csv"))?;
        checks_table(&self.checks).write(&out.join("checks.csv"))
    }
}

#[derive(Clone, Copy)]
enum MmsCase {
    Flow(&'static str, f64, f64, f64),
    Elliptic(&'static str, f64, ExactField),
}

impl MmsCase {
    fn name(&self) -> &'static str {
        match self {
            MmsCase::Flow(n, ..) | MmsCase::Elliptic(n, ..) => n,
        }
    }
}

/// Convergence battery over refinement levels `levels` (strictly increasing).
pub fn mms_battery(levels: &[usize]) -> Result<MmsReport> {
    if levels.len() < 2 || levels.windows(2).any(|w| w[1] <= w[0]) || levels[0] == 0 {
        return Err(ChbError::Config("mms levels must be positive and strictly increasing".into()));
    }
    let cases = [
        MmsCase::Flow("brinkman", 1.0, 1.0, 1.0),
        MmsCase::Flow("stokes_slip", 1.0, 0.0, 0.5),
        MmsCase::Flow("stokes_frictionless", 1.0, 0.0, 0.0),
        MmsCase::Elliptic("elliptic_k1", 1.0, ExactField::Smooth),
        MmsCase::Elliptic("elliptic_k0", 0.0, ExactField::Smooth),
        MmsCase::Elliptic("linear_k0", 0.0, ExactField::Linear),
    ];
    let jobs: Vec<(usize, usize)> = (0..cases.len()).flat_map(|c| levels.iter().map(move |&n| (c, n))).collect();
    type Raw = (usize, usize, f64, f64, f64, f64);
    let raw: Vec<Raw> = worker_pool()?.install(|| {
        jobs.into_par_iter()
            .map(|(c, n)| -> Result<Raw> {
                Ok(match cases[c] {
                    MmsCase::Flow(_, nu, lam, gam) => {
                        let r = brinkman_mms(n, nu, lam, gam)?;
                        (c, n, r.h, r.velocity_l2, r.pressure_l2, r.energy_identity.max(r.divergence))
                    }
                    MmsCase::Elliptic(_, k, u) => {
                        let r = elliptic_mms(n, k, u)?;
                        (c, n, r.h, r.bulk_l2, r.surface_l2, 0.0)
                    }
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut entries = Vec::new();
    let mut checks = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        let rows: Vec<&Raw> = raw.iter().filter(|r| r.0 == ci).collect();
        let mut orders = Vec::new();
        for (j, r) in rows.iter().enumerate() {
            let (o, os) = if j == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let p = rows[j - 1];
                let lh = (p.2 / r.2).ln();
                ((p.3 / r.3).ln() / lh, (p.4 / r.4).ln() / lh)
            };
            if j > 0 {
                orders.push((o, os));
            }
            entries.push(MmsEntry {
                problem: case.name().into(),
                n: r.1,
                h: r.2,
                error: r.3,
                secondary: r.4,
                order: o,
                secondary_order: os,
            });
        }
        match case {
            MmsCase::Flow(..) => {
                let min = orders.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
                checks.push(Check::new(
                    &format!("{}_order", case.name()),
                    min >= 1.7,
                    format!("minimum velocity order {min:.3}"),
                ));
                let id = rows.iter().map(|r| r.5).fold(0.0, f64::max);
                checks.push(Check::new(
                    &format!("{}_energy_identity", case.name()),
                    id <= 1e-8,
                    format!("largest identity/divergence residual {id:.3e}"),
                ));
            }
            MmsCase::Elliptic(_, _, ExactField::Linear) => {
                let e = rows.iter().map(|r| r.3.max(r.4)).fold(0.0, f64::max);
                checks.push(Check::new("linear_k0_exact", e <= 1e-12, format!("largest error {e:.3e}")));
            }
            MmsCase::Elliptic(..) => {
                let ok = orders.iter().all(|o| (1.7..=2.3).contains(&o.0) && (1.7..=2.3).contains(&o.1));
                checks.push(Check::new(
                    &format!("{}_order", case.name()),
                    ok,
                    format!("bulk/surface orders {orders:.3?}"),
                ));
            }
        }
    }
    Ok(MmsReport { entries, checks })
}

struct Amplitude {
    mode: Vec<f64>,
    norm: f64,
    series: Vec<(f64, f64)>,
}

impl RunSink for Amplitude {
    fn record(&mut self, _rec: &DiagnosticsRecord) -> Result<()> {
        Ok(())
    }

    fn observe(&mut self, _step: usize, state: &FieldState, disc: &Discretization) -> Result<()> {
        let a = disc.mass.bilinear(&state.phi, &self.mode) / self.norm;
        self.series.push((state.t, a));
        Ok(())
    }
}

/// Linear growth rate `-M k^2 (k^2 + F''(0))` of `cos(k pi x)` about zero.
pub fn dispersion_rate(mobility: f64, f2: f64, k: f64) -> f64 {
    let q2 = (k * PI).powi(2);
    -mobility * q2 * (q2 + f2)
}

/// Fits the exponential rate of single-mode perturbations `delta cos(k pi x)`.
pub fn spinodal(base: &RunSpec, ks: &[f64], delta: f64, out: Option<&Path>) -> Result<SweepResult> {
    let CoefficientFn::Constant(m) = base.model.coeffs.m_bulk else {
        return Err(ChbError::Config("spinodal needs a constant bulk mobility".into()));
    };
    if base.model.bulk.yosida.is_some() {
        return Err(ChbError::Config("spinodal needs a regular bulk potential".into()));
    }
    if ks.is_empty() || !(delta > 0.0) {
        return Err(ChbError::Config("spinodal needs wavenumbers and a positive amplitude".into()));
    }
    let f2 = base.model.bulk.potential.second_derivative(0.0)?;
    let rows = fan_out(ks.to_vec(), |k| {
        let mut spec = base.clone();
        spec.init = InitialData {
            phi: FieldInit::Cos {
                amp: delta,
                kx: k,
                ky: 0.0,
                offset: 0.0,
            },
            psi: SurfaceInit::Trace,
            seed: base.init.seed,
        };
        let disc = Discretization::new(spec.n)?;
        let mode: Vec<f64> = disc.mesh.bulk.node_coords.iter().map(|p| (k * PI * p[0]).cos()).collect();
        let norm = disc.mass.quadratic(&mode);
        let mut obs = Amplitude {
            mode,
            norm,
            series: Vec::new(),
        };
        execute_observed(&spec, run_dir(out, "k", k).as_deref(), &mut obs)?;
        if obs.series.len() < 3 {
            return Err(ChbError::Config("spinodal needs at least two time steps".into()));
        }
        let t: Vec<f64> = obs.series.iter().map(|s| s.0).collect();
        let la: Vec<f64> = obs.series.iter().map(|s| s.1.abs().ln()).collect();
        let (rate, _) = linear_fit(&t, &la)?;
        let theory = dispersion_rate(m, f2, k);
        Ok(RunRow {
            param: k,
            values: vec![rate, theory, ((rate - theory) / theory).abs()],
        })
    })?;
    let mut checks: Vec<Check> = rows
        .iter()
        .map(|r| {
            Check::new(
                &format!("rate_k{}", r.param),
                r.values[2] <= 0.05,
                format!("measured {:.4} theory {:.4} rel {:.3e}", r.values[0], r.values[1], r.values[2]),
            )
        })
        .collect();
    let grows = rows.iter().any(|r| r.values[1] > 0.0 && r.values[0] > 0.0);
    let decays = rows.iter().any(|r| r.values[1] < 0.0 && r.values[0] < 0.0);
    checks.push(Check::new(
        "growing_and_decaying",
        grows && decays,
        format!("growing mode present: {grows}, decaying mode present: {decays}"),
    ));
    Ok(SweepResult {
        parameter: "k".into(),
        columns: ["rate_measured", "rate_theory", "rel_error"].map(String::from).to_vec(),
        rows,
        fit: None,
        checks,
    })
}
