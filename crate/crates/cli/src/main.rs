use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anisoflow::visc::{admissible, beta_unchecked, hessian_spectrum, lambda_threshold, ViscosityParams};
use anisoflow_cli::audit::{audit_rei, PairSpec};
use anisoflow_cli::runner::{run, run_dir};
use anisoflow_cli::scenario::Scenario;
use anisoflow_cli::sweep::{sweep_domain, sweep_dt, sweep_eps, worker_count};
use anisoflow_cli::{CliError, CliResult};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anisoflow", version, about = "Anisotropic compressible flow runs, sweeps and audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario to its final time.
    Run {
        scenario: PathBuf,
        /// Output directory (default: the scenario's [output] dir, else runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario for each eps, largest first.
    SweepEps {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario for each dt, largest first.
    SweepDt {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        dt: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario on [-R, R]^3 for each R at the scenario's spacing.
    SweepDomain {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        extents: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative entropy of a stored run against `far-field`, `initial` or a
    /// reference run directory.
    AuditRei {
        run: PathBuf,
        pair: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include Jensen-gap defect estimates in E_rel and the remainder.
        #[arg(long)]
        with_defects: bool,
    },
    /// Admissibility, ellipticity constant and Hessian spectrum of (mu, delta, lambda).
    CheckVisc {
        #[arg(allow_hyphen_values = true)]
        mu: f64,
        #[arg(allow_hyphen_values = true)]
        delta: f64,
        #[arg(allow_hyphen_values = true)]
        lambda: f64,
    },
}

fn sweep_out(s: &Scenario, out: Option<PathBuf>, kind: &str) -> PathBuf {
    out.unwrap_or_else(|| Path::new("runs").join(format!("{}-{kind}", s.name)))
}

fn check_visc(mu: f64, delta: f64, lambda: f64) -> CliResult<()> {
    let ok = admissible(mu, delta, lambda)?;
    println!("mu = {mu}, delta = {delta}, lambda = {lambda}");
    println!("lambda threshold: {}", lambda_threshold(mu, delta));
    println!("admissible: {ok}");
    println!("beta: {}", beta_unchecked(mu, delta, lambda));
    if ok {
        let p = ViscosityParams::new(mu, delta, lambda)?;
        let spec: Vec<String> = hessian_spectrum(&p).iter().map(|x| x.to_string()).collect();
        println!("hessian spectrum: {}", spec.join(" "));
    } else {
        println!("need mu >= delta > 0 and lambda > -mu(mu+3delta)/(mu+2delta)");
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { scenario, out } => {
            let s = Scenario::load(&scenario)?;
            let dir = run_dir(&s, out.as_deref());
            let o = run(&s, &dir)?;
            println!(
                "{}: {} steps, final energy {:e}, max budget residual {:e}, audits passed -> {}",
                s.name,
                o.summary.steps,
                o.summary.final_energy,
                o.summary.max_budget_residual,
                dir.display()
            );
        }
        Command::SweepEps { scenario, eps, out } => {
            let s = Scenario::load(&scenario)?;
            let dir = sweep_out(&s, out, "eps");
            let t = sweep_eps(&s, &eps, &dir, worker_count()?)?;
            println!("{:>12} {:>16} {:>14} {:>14} {:>14}", "eps", "grad budget", "energy", "defect mass", "budget res");
            for r in &t.rows {
                println!(
                    "{:>12e} {:>16e} {:>14e} {:>14e} {:>14e}",
                    r.eps, r.grad_density_budget, r.final_energy, r.defect_mass, r.max_budget_residual
                );
            }
            println!("gradient budget bounded by {:e}: {}", t.bound, t.bounded);
            if !t.bounded || !t.residuals_within_tolerance {
                return Err(CliError::Audit("eps sweep is not uniformly bounded".into()));
            }
        }
        Command::SweepDt { scenario, dt, out } => {
            let s = Scenario::load(&scenario)?;
            let dir = sweep_out(&s, out, "dt");
            let t = sweep_dt(&s, &dt, &dir, worker_count()?)?;
            println!("{:>12} {:>16} {:>10}", "dt", "budget res", "reduction");
            for r in &t.rows {
                let q = r.reduction.map(|q| format!("{q:.3}")).unwrap_or_default();
                println!("{:>12e} {:>16e} {:>10}", r.dt, r.max_budget_residual, q);
            }
            if !t.first_order {
                return Err(CliError::Audit("budget residual does not decrease at first order".into()));
            }
        }
        Command::SweepDomain { scenario, extents, out } => {
            let s = Scenario::load(&scenario)?;
            let dir = sweep_out(&s, out, "domain");
            let t = sweep_domain(&s, &extents, &dir, worker_count()?)?;
            println!("{:>8} {:>6} {:>16} {:>16}", "R", "cells", "density diff", "momentum diff");
            for r in &t.rows {
                let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
                println!("{:>8} {:>6} {:>16} {:>16}", r.extent, r.cells, f(r.density_difference), f(r.momentum_difference));
            }
            for w in &t.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::AuditRei { run, pair, out, with_defects } => {
            let out = out.unwrap_or_else(|| run.join("audit"));
            let a = audit_rei(&run, &PairSpec::parse(&pair), &out, with_defects)?;
            println!("{} samples, max positive residual {:e}", a.samples, a.max_positive_residual);
            if let Some(g) = &a.gronwall {
                println!("C = {:e}, envelope holds: {}, chain holds: {}", g.c, g.envelope_holds, g.chain_holds);
            }
        }
        Command::CheckVisc { mu, delta, lambda } => check_visc(mu, delta, lambda)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
