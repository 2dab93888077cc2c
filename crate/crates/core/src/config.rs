//! Plain-text `key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Unknown and duplicate
//! keys are errors. See the README for the full key list.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::brinkman::{CoefficientFn, Coefficients};
use crate::cahnhilliard::{FieldInit, InitialData, ModelConfig, Scheme, SurfaceInit};
use crate::error::{ChbError, Result};
use crate::experiments::RunSpec;
use crate::potentials::{domination_samples, validate_domination, DominationReport, Potential, PotentialPair, SchemePotential};

const KEYS: &[&str] = &[
    "domain.n",
    "model.K",
    "seed",
    "potential.mode",
    "potential.eps",
    "potential.kappa1",
    "potential.kappa2",
    "potential.domination_samples",
    "potential.bulk.kind",
    "potential.bulk.alpha",
    "potential.bulk.theta",
    "potential.bulk.theta_c",
    "potential.surface.kind",
    "potential.surface.alpha",
    "potential.surface.theta",
    "potential.surface.theta_c",
    "coeffs.nu",
    "coeffs.lambda",
    "coeffs.gamma",
    "coeffs.m_bulk",
    "coeffs.m_surf",
    "time.dt",
    "time.T",
    "solver.newton_tol",
    "solver.newton_max_iter",
    "solver.scheme",
    "solver.max_halvings",
    "init.phi",
    "init.psi",
    "output.fields_every",
    "sweep.k",
    "sweep.include_zero",
    "sweep.eps",
    "stability.delta",
    "stability.eta",
    "mms.levels",
    "spinodal.k",
    "spinodal.delta",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialMode {
    Regular,
    /// Convex parts replaced by Yosida approximations with this `eps`.
    Singular { eps: f64 },
}

/// Parameters of the campaign subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct Campaigns {
    pub sweep_k: Vec<f64>,
    pub include_zero: bool,
    pub sweep_eps: Vec<f64>,
    pub stability_delta: Vec<f64>,
    pub stability_eta: FieldInit,
    pub mms_levels: Vec<usize>,
    pub spinodal_k: Vec<f64>,
    pub spinodal_delta: f64,
}

/// Parsed and validated configuration with its provenance.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: Option<PathBuf>,
    /// SHA-256 of the configuration text.
    pub hash: String,
    pub values: BTreeMap<String, String>,
    pub spec: RunSpec,
    pub mode: PotentialMode,
    pub potentials: PotentialPair,
    pub domination: Option<DominationReport>,
    pub campaigns: Campaigns,
}

fn cfg_err(key: &str, msg: impl std::fmt::Display) -> ChbError {
    ChbError::Config(format!("{key}: {msg}"))
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| cfg_err(key, format!("expected a number, got {s:?}")))?;
    if !v.is_finite() {
        return Err(cfg_err(key, "must be finite"));
    }
    Ok(v)
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|p| parse_f64(key, p)).collect()
}

fn parse_usize(key: &str, s: &str) -> Result<usize> {
    s.trim().parse().map_err(|_| cfg_err(key, format!("expected a nonnegative integer, got {s:?}")))
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(cfg_err(key, format!("expected true or false, got {s:?}"))),
    }
}

fn split_tag<'a>(key: &str, s: &'a str) -> Result<(&'a str, &'a str)> {
    s.split_once(':').ok_or_else(|| cfg_err(key, format!("expected <kind>:<args>, got {s:?}")))
}

fn args<const N: usize>(key: &str, s: &str) -> Result<[f64; N]> {
    let v = parse_list(key, s)?;
    v.try_into()
        .map_err(|v: Vec<f64>| cfg_err(key, format!("expected {N} comma-separated numbers, got {}", v.len())))
}

/// `const:c`, `cos:amp,kx,ky,offset`, `noise:mean,amp`, `plane:a,b,c`, `step:x0,w`
pub fn parse_field_init(key: &str, s: &str) -> Result<FieldInit> {
    let (tag, rest) = split_tag(key, s)?;
    Ok(match tag.trim() {
        "const" => FieldInit::Const(parse_f64(key, rest)?),
        "cos" => {
            let [amp, kx, ky, offset] = args(key, rest)?;
            FieldInit::Cos { amp, kx, ky, offset }
        }
        "noise" => {
            let [mean, amp] = args(key, rest)?;
            if amp < 0.0 {
                return Err(cfg_err(key, "noise amplitude must be >= 0"));
            }
            FieldInit::Noise { mean, amp }
        }
        "plane" => {
            let [a, b, c] = args(key, rest)?;
            FieldInit::Plane { a, b, c }
        }
        "step" => {
            let [x0, w] = args(key, rest)?;
            if !(w > 0.0) {
                return Err(cfg_err(key, "step width must be positive"));
            }
            FieldInit::Step { x0, w }
        }
        other => return Err(cfg_err(key, format!("unknown profile {other:?}"))),
    })
}

/// A number, `affine:a,b,lo,hi` or `table:r1:v1,r2:v2,...`
pub fn parse_coefficient(key: &str, s: &str) -> Result<CoefficientFn> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Ok(CoefficientFn::Constant(v));
    }
    let (tag, rest) = split_tag(key, s)?;
    match tag {
        "affine" => {
            let [a, b, lo, hi] = args(key, rest)?;
            Ok(CoefficientFn::ClampedAffine { a, b, lo, hi })
        }
        "table" => {
            let mut r = Vec::new();
            let mut v = Vec::new();
            for pair in rest.split(',') {
                let (a, b) = pair
                    .split_once(':')
                    .ok_or_else(|| cfg_err(key, format!("table entries are r:v, got {pair:?}")))?;
                r.push(parse_f64(key, a)?);
                v.push(parse_f64(key, b)?);
            }
            Ok(CoefficientFn::Tabulated { r, v })
        }
        other => Err(cfg_err(key, format!("unknown coefficient form {other:?}"))),
    }
}

struct Values(BTreeMap<String, String>);

impl Values {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |s| parse_f64(key, s))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        self.get(key).map_or(Ok(default), |s| parse_usize(key, s))
    }

    fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        self.get(key).map_or(Ok(default.to_vec()), |s| parse_list(key, s))
    }

    fn coeff_or(&self, key: &str, default: f64) -> Result<CoefficientFn> {
        self.get(key)
            .map_or(Ok(CoefficientFn::Constant(default)), |s| parse_coefficient(key, s))
    }

    fn potential(&self, side: &str) -> Result<Potential> {
        let key = format!("potential.{side}.kind");
        let kind = self.get(&key).unwrap_or("polynomial");
        let p = |k: &str, d: f64| self.f64_or(&format!("potential.{side}.{k}"), d);
        Ok(match kind {
            "polynomial" => Potential::Polynomial { alpha: p("alpha", 1.0)? },
            "logarithmic" => {
                let theta = p("theta", 1.0)?;
                let theta_c = p("theta_c", 2.0)?;
                if !(theta > 0.0) {
                    return Err(cfg_err(&key, "logarithmic theta must be positive"));
                }
                Potential::Logarithmic { theta, theta_c }
            }
            "obstacle" => Potential::DoubleObstacle,
            other => return Err(cfg_err(&key, format!("unknown potential {other:?}"))),
        })
    }
}

impl RunConfig {
    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, Some(path.to_path_buf()))
    }

    /// Parses and validates `text`; every coefficient and potential
    /// assumption is checked here, before any solve.
    pub fn parse(text: &str, source: Option<PathBuf>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ChbError::Config(format!("line {}: expected key = value, got {raw:?}", ln + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ChbError::Config(format!("line {}: unknown key {k:?}", ln + 1)));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ChbError::Config(format!("line {}: duplicate key {k:?}", ln + 1)));
            }
        }
        let vals = Values(map);

        let n = vals.usize_or("domain.n", 16)?;
        if n == 0 {
            return Err(cfg_err("domain.n", "must be positive"));
        }
        let coeffs = Coefficients {
            nu: vals.coeff_or("coeffs.nu", 1.0)?,
            lambda: vals.coeff_or("coeffs.lambda", 0.0)?,
            gamma: vals.coeff_or("coeffs.gamma", 0.0)?,
            m_bulk: vals.coeff_or("coeffs.m_bulk", 1.0)?,
            m_surf: vals.coeff_or("coeffs.m_surf", 1.0)?,
        };
        coeffs.validate()?;

        let potentials = PotentialPair {
            bulk: vals.potential("bulk")?,
            surface: vals.potential("surface")?,
        };
        let mode = match vals.get("potential.mode").unwrap_or("regular") {
            "regular" => {
                if vals.get("potential.eps").is_some() {
                    return Err(cfg_err("potential.eps", "only allowed with potential.mode = singular"));
                }
                PotentialMode::Regular
            }
            "singular" => {
                let eps = vals
                    .get("potential.eps")
                    .ok_or_else(|| cfg_err("potential.eps", "required with potential.mode = singular"))?;
                let eps = parse_f64("potential.eps", eps)?;
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(cfg_err("potential.eps", format!("must lie in (0, 1), got {eps}")));
                }
                PotentialMode::Singular { eps }
            }
            other => return Err(cfg_err("potential.mode", format!("expected regular or singular, got {other:?}"))),
        };
        let (bulk, surface, domination) = match mode {
            PotentialMode::Regular => (
                SchemePotential::regular(potentials.bulk.clone())?,
                SchemePotential::regular(potentials.surface.clone())?,
                None,
            ),
            PotentialMode::Singular { eps } => {
                let k1 = vals.f64_or("potential.kappa1", 1.0)?;
                let k2 = vals.f64_or("potential.kappa2", 1.0)?;
                if k1 < 0.0 || k2 < 0.0 {
                    return Err(cfg_err("potential.kappa1", "domination constants must be >= 0"));
                }
                let count = vals.usize_or("potential.domination_samples", 1000)?;
                let samples = domination_samples(&potentials.surface.convex_graph(), count.max(2));
                let rep = validate_domination(&potentials, &samples, k1, k2)?;
                (
                    SchemePotential::regularized(potentials.bulk.clone(), eps)?,
                    SchemePotential::regularized(potentials.surface.clone(), eps)?,
                    Some(rep),
                )
            }
        };

        let scheme = match vals.get("solver.scheme").unwrap_or("coupled") {
            "coupled" => Scheme::Coupled,
            "lagged" => Scheme::Lagged,
            other => return Err(cfg_err("solver.scheme", format!("expected coupled or lagged, got {other:?}"))),
        };
        let model = ModelConfig {
            k: vals.f64_or("model.K", 0.1)?,
            bulk,
            surface,
            coeffs,
            dt: vals.f64_or("time.dt", 1e-4)?,
            t_final: vals.f64_or("time.T", 0.05)?,
            newton_tol: vals.f64_or("solver.newton_tol", 1e-10)?,
            newton_max_iter: vals.usize_or("solver.newton_max_iter", 30)?,
            scheme,
            max_halvings: vals.usize_or("solver.max_halvings", 3)? as u32,
        };
        model.validate()?;

        let phi = parse_field_init("init.phi", vals.get("init.phi").unwrap_or("noise:0,0.05"))?;
        let psi = match vals.get("init.psi").unwrap_or("trace") {
            "trace" => SurfaceInit::Trace,
            s => SurfaceInit::Field(parse_field_init("init.psi", s)?),
        };
        let seed = vals.get("seed").map_or(Ok(0), |s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| cfg_err("seed", format!("expected an unsigned integer, got {s:?}")))
        })?;
        // 0 still writes the initial and final snapshots
        let fields_every = Some(vals.usize_or("output.fields_every", 0)?);

        let mms_levels = vals
            .list_or("mms.levels", &[4.0, 8.0, 16.0, 32.0])?
            .into_iter()
            .map(|v| {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(cfg_err("mms.levels", format!("levels must be positive integers, got {v}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let campaigns = Campaigns {
            sweep_k: vals.list_or("sweep.k", &[1e-1, 1e-2, 1e-3, 1e-4])?,
            include_zero: vals.get("sweep.include_zero").map_or(Ok(true), |s| parse_bool("sweep.include_zero", s))?,
            sweep_eps: vals.list_or("sweep.eps", &[0.125, 0.0625, 0.03125, 0.015625, 0.0078125])?,
            stability_delta: vals.list_or("stability.delta", &[1e-2, 5e-3, 2.5e-3])?,
            stability_eta: parse_field_init("stability.eta", vals.get("stability.eta").unwrap_or("cos:1,1,1,0"))?,
            mms_levels,
            spinodal_k: vals.list_or("spinodal.k", &[1.0, 2.0])?,
            spinodal_delta: vals.f64_or("spinodal.delta", 1e-4)?,
        };

        Ok(Self {
            source,
            hash: hex::encode(Sha256::digest(text.as_bytes())),
            values: vals.0,
            spec: RunSpec {
                n,
                model,
                init: InitialData { phi, psi, seed },
                fields_every,
            },
            mode,
            potentials,
            domination,
            campaigns,
        })
    }

    /// Overrides the configured seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.spec.init.seed = seed;
        self
    }
}
