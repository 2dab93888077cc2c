use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chb_core::config::{PotentialMode, RunConfig};
use chb_core::experiments::{self, run_dir, Check, RunSpec};
use chb_core::io::Table;
use chb_core::{Assumption, ChbError};
use clap::{Args, Parser, Subcommand};

/// Bulk-surface Cahn-Hilliard-Brinkman simulator.
#[derive(Parser)]
#[command(name = "chb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Plain-text key = value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Single run: timeseries, optional VTK snapshots and a summary.
    Run(Common),
    /// Boundary mismatch against K with a log-log slope fit.
    SweepK(Common),
    /// Yosida eps sweep for singular potentials.
    SweepEps(Common),
    /// Continuous dependence on the initial data.
    Stability(Common),
    /// Manufactured-solution convergence battery.
    Mms(Common),
    /// Linear growth rates of single modes.
    Spinodal(Common),
    /// Checks the configuration without solving or writing anything.
    Validate(Common),
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_UNREADABLE: u8 = 3;
const EXIT_PARSE: u8 = 4;
const EXIT_MOBILITY: u8 = 5;
const EXIT_VISCOSITY: u8 = 6;
const EXIT_INVARIANT: u8 = 7;
const EXIT_SOLVER: u8 = 8;
const EXIT_IO: u8 = 9;

fn exit_code(e: &ChbError) -> u8 {
    match e {
        ChbError::Config(_) => EXIT_PARSE,
        ChbError::Assumption {
            assumption: Assumption::Mobility,
            ..
        } => EXIT_MOBILITY,
        ChbError::Assumption {
            assumption: Assumption::Viscosity,
            ..
        } => EXIT_VISCOSITY,
        ChbError::Assumption { .. }
        | ChbError::Domain(_)
        | ChbError::LengthMismatch { .. }
        | ChbError::OutsideDomain { .. }
        | ChbError::Unsupported(_) => EXIT_INVARIANT,
        ChbError::Solver { .. } | ChbError::NonFinite(_) => EXIT_SOLVER,
        ChbError::Io(_) => EXIT_IO,
    }
}

fn load(c: &Common) -> Result<RunConfig, (u8, String)> {
    let text = std::fs::read_to_string(&c.config)
        .map_err(|e| (EXIT_UNREADABLE, format!("cannot read {}: {e}", c.config.display())))?;
    let cfg = RunConfig::parse(&text, Some(c.config.clone())).map_err(|e| (exit_code(&e), e.to_string()))?;
    Ok(match c.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn write_provenance(out: &Path, cmd: &str, cfg: &RunConfig) -> chb_core::Result<()> {
    let mut t = Table::new(&["key", "value"]);
    t.push(vec!["command".into(), cmd.into()]);
    t.push(vec![
        "config".into(),
        cfg.source.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
    ]);
    t.push(vec!["config_sha256".into(), cfg.hash.clone()]);
    t.push(vec!["seed".into(), cfg.spec.init.seed.to_string()]);
    t.push(vec!["version".into(), env!("CARGO_PKG_VERSION").into()]);
    t.write(&out.join("provenance.csv"))
}

fn report(checks: &[Check]) -> u8 {
    for c in checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if checks.iter().all(|c| c.pass) {
        0
    } else {
        EXIT_CHECK_FAILED
    }
}

fn validate(cfg: &RunConfig) -> chb_core::Result<()> {
    let spec: &RunSpec = &cfg.spec;
    let sim = chb_core::cahnhilliard::Simulator::new(spec.n, spec.model.clone())?;
    let s0 = sim.initial_state(&spec.init)?;
    println!("config {}", cfg.source.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
    println!("sha256 {}", cfg.hash);
    println!("n = {}, K = {}, dt = {}, T = {}, steps = {}", spec.n, spec.model.k, spec.model.dt, spec.model.t_final, spec.model.n_steps());
    match cfg.mode {
        PotentialMode::Regular => println!("potentials: {} / {} (regular)", cfg.potentials.bulk.name(), cfg.potentials.surface.name()),
        PotentialMode::Singular { eps } => println!(
            "potentials: {} / {} (singular, eps = {eps})",
            cfg.potentials.bulk.name(),
            cfg.potentials.surface.name()
        ),
    }
    if let Some(d) = &cfg.domination {
        println!("domination: pass with kappa1 = {}, kappa2 = {}", d.kappa1, d.kappa2);
    }
    println!(
        "initial means: bulk {:.6e}, surface {:.6e}",
        sim.disc.bulk_mass(&s0.phi) / sim.disc.area(),
        sim.disc.surface_mass(&s0.psi) / sim.disc.perimeter()
    );
    println!("stability hypothesis (constant nu, M): {}", spec.model.coeffs.all_constant_for_stability());
    Ok(())
}

fn dispatch(cmd: &Command) -> Result<u8, (u8, String)> {
    let (name, c) = match cmd {
        Command::Run(c) => ("run", c),
        Command::SweepK(c) => ("sweep-k", c),
        Command::SweepEps(c) => ("sweep-eps", c),
        Command::Stability(c) => ("stability", c),
        Command::Mms(c) => ("mms", c),
        Command::Spinodal(c) => ("spinodal", c),
        Command::Validate(c) => ("validate", c),
    };
    let cfg = load(c)?;
    let fail = |e: ChbError| (exit_code(&e), e.to_string());
    if let Command::Validate(_) = cmd {
        validate(&cfg).map_err(fail)?;
        println!("valid");
        return Ok(0);
    }
    let out = c.out.as_path();
    std::fs::create_dir_all(out).map_err(|e| fail(e.into()))?;
    write_provenance(out, name, &cfg).map_err(fail)?;
    let camp = &cfg.campaigns;
    let spec = &cfg.spec;
    let code = match cmd {
        Command::Run(_) => {
            let dir = run_dir(Some(out), "K", spec.model.k).unwrap();
            let o = experiments::execute(spec, Some(&dir)).map_err(fail)?;
            let disc = chb_core::cahnhilliard::Discretization::new(spec.n).map_err(fail)?;
            let t = experiments::run_summary(disc.area(), disc.perimeter(), &o);
            t.write(&out.join("summary.csv")).map_err(fail)?;
            print!("{}", t.to_csv());
            0
        }
        Command::SweepK(_) => {
            let r = experiments::sweep_k(spec, &camp.sweep_k, camp.include_zero, Some(out)).map_err(fail)?;
            r.write(out).map_err(fail)?;
            report(&r.checks)
        }
        Command::SweepEps(_) => {
            let r = experiments::sweep_eps(spec, &camp.sweep_eps, Some(out)).map_err(fail)?;
            r.write(out).map_err(fail)?;
            report(&r.checks)
        }
        Command::Stability(_) => {
            let r = experiments::stability_experiment(spec, &camp.stability_delta, &camp.stability_eta, Some(out))
                .map_err(fail)?;
            r.write(out).map_err(fail)?;
            report(&r.checks)
        }
        Command::Mms(_) => {
            let r = experiments::mms_battery(&camp.mms_levels).map_err(fail)?;
            r.write(out).map_err(fail)?;
            report(&r.checks)
        }
        Command::Spinodal(_) => {
            let r = experiments::spinodal(spec, &camp.spinodal_k, camp.spinodal_delta, Some(out)).map_err(fail)?;
            r.write(out).map_err(fail)?;
            report(&r.checks)
        }
        Command::Validate(_) => unreachable!(),
    };
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
