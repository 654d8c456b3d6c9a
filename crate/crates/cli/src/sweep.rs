use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anisoflow::grid::{lp_norm, DiscreteDomain};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::plot;
use crate::runner::{execute, to_json, write_file, RunOutcome};
use crate::scenario::Scenario;

pub const WORKERS_ENV: &str = "ANISOFLOW_WORKERS";

/// Worker count from `ANISOFLOW_WORKERS`, defaulting to the available cores.
pub fn worker_count() -> CliResult<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Run every scenario into its own directory on a pool of `workers` threads.
/// Results come back in input order.
pub fn run_all(jobs: &[(Scenario, PathBuf)], workers: usize) -> CliResult<Vec<RunOutcome>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let results: Vec<CliResult<RunOutcome>> =
        pool.install(|| jobs.par_iter().map(|(s, dir)| execute(s, Some(dir))).collect());
    results.into_iter().collect()
}

fn label(v: f64) -> String {
    format!("{v:e}")
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn write_table(dir: &Path, name: &str, csv: &str, json: &str, column: usize, xlabel: &str) -> CliResult<()> {
    write_file(&dir.join(format!("{name}.csv")), csv)?;
    write_file(&dir.join(format!("{name}.json")), json)?;
    write_file(&dir.join(format!("{name}.gp")), &plot::sweep_script(&format!("{name}.csv"), column, xlabel))
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsRow {
    pub eps: f64,
    pub grad_density_budget: f64,
    pub final_energy: f64,
    pub final_kinetic: f64,
    pub final_internal: f64,
    pub defect_mass: f64,
    pub max_budget_residual: f64,
    pub budget_tolerance: f64,
    pub audit_passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsSweep {
    pub rows: Vec<EpsRow>,
    /// Twice the gradient budget at the largest ε.
    pub bound: f64,
    pub bounded: bool,
    pub residuals_within_tolerance: bool,
}

pub fn sweep_eps(base: &Scenario, eps: &[f64], dir: &Path, workers: usize) -> CliResult<EpsSweep> {
    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0)) || !strictly_decreasing(eps) {
        return Err(CliError::Usage("eps values must be positive and strictly decreasing".into()));
    }
    let jobs: Vec<_> = eps
        .iter()
        .map(|&e| {
            let mut s = base.clone();
            s.eps = e;
            s.name = format!("{}-eps{}", base.name, label(e));
            let d = dir.join(format!("eps_{}", label(e)));
            (s, d)
        })
        .collect();
    ensure_dir(dir)?;
    let outcomes = run_all(&jobs, workers)?;
    let rows: Vec<EpsRow> = outcomes
        .iter()
        .zip(eps)
        .map(|(o, &e)| EpsRow {
            eps: e,
            grad_density_budget: o.summary.grad_density_budget,
            final_energy: o.summary.final_energy,
            final_kinetic: o.summary.final_kinetic,
            final_internal: o.summary.final_internal,
            defect_mass: o.summary.defect_mass,
            max_budget_residual: o.summary.max_budget_residual,
            budget_tolerance: o.summary.budget_tolerance,
            audit_passed: o.summary.audit_passed,
        })
        .collect();
    let bound = 2.0 * rows[0].grad_density_budget;
    let bounded = rows.iter().all(|r| r.grad_density_budget <= bound + 1e-12);
    let residuals_within_tolerance = rows.iter().all(|r| r.max_budget_residual <= r.budget_tolerance + 1e-12);
    let mut csv = String::from("eps,grad_density_budget,final_energy,final_kinetic,final_internal,defect_mass,max_budget_residual\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.eps, r.grad_density_budget, r.final_energy, r.final_kinetic, r.final_internal, r.defect_mass, r.max_budget_residual
        )
        .unwrap();
    }
    let out = EpsSweep { rows, bound, bounded, residuals_within_tolerance };
    write_table(dir, "sweep_eps", &csv, &to_json(&out), 2, "eps")?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DtRow {
    pub dt: f64,
    pub max_budget_residual: f64,
    /// Previous residual over this one.
    pub reduction: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DtSweep {
    pub rows: Vec<DtRow>,
    /// Every defined reduction lies in [1.5, 3].
    pub first_order: bool,
}

/// Reductions below this residual are not meaningful.
const RESIDUAL_FLOOR: f64 = 1e-14;

pub fn sweep_dt(base: &Scenario, dts: &[f64], dir: &Path, workers: usize) -> CliResult<DtSweep> {
    if dts.is_empty() || dts.iter().any(|&e| !(e > 0.0)) || !strictly_decreasing(dts) {
        return Err(CliError::Usage("dt values must be positive and strictly decreasing".into()));
    }
    let jobs: Vec<_> = dts
        .iter()
        .map(|&dt| {
            let mut s = base.clone();
            s.dt = dt;
            s.name = format!("{}-dt{}", base.name, label(dt));
            (s, dir.join(format!("dt_{}", label(dt))))
        })
        .collect();
    ensure_dir(dir)?;
    let outcomes = run_all(&jobs, workers)?;
    let mut rows: Vec<DtRow> = Vec::with_capacity(dts.len());
    for (o, &dt) in outcomes.iter().zip(dts) {
        let r = o.summary.max_budget_residual;
        let reduction = rows
            .last()
            .filter(|prev| prev.max_budget_residual > RESIDUAL_FLOOR && r > RESIDUAL_FLOOR)
            .map(|prev| prev.max_budget_residual / r);
        rows.push(DtRow { dt, max_budget_residual: r, reduction });
    }
    let first_order = rows.iter().filter_map(|r| r.reduction).all(|q| (1.5..=3.0).contains(&q));
    let mut csv = String::from("dt,max_budget_residual,reduction\n");
    for r in &rows {
        writeln!(csv, "{},{},{}", r.dt, r.max_budget_residual, r.reduction.map(|q| q.to_string()).unwrap_or_default()).unwrap();
    }
    let out = DtSweep { rows, first_order };
    write_table(dir, "sweep_dt", &csv, &to_json(&out), 2, "dt")?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainRow {
    pub extent: f64,
    pub cells: usize,
    /// ‖ρ_R − ρ_prev‖ in L^γ(Ω_R0).
    pub density_difference: Option<f64>,
    /// ‖ρu_R − ρu_prev‖ in L^{2γ/(γ+1)}(Ω_R0).
    pub momentum_difference: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainSweep {
    pub spacing: f64,
    pub rows: Vec<DomainRow>,
    pub density_nonincreasing: bool,
    pub momentum_nonincreasing: bool,
    pub warnings: Vec<String>,
}

/// Grid with spacing `h` on [-R, R]³, or an error when 2R/h is not an integer.
pub fn domain_with_spacing(extent: f64, h: f64) -> CliResult<DiscreteDomain> {
    let cells = (2.0 * extent / h).round();
    if cells < 2.0 || (2.0 * extent / cells - h).abs() > 1e-9 * h {
        return Err(CliError::Usage(format!("extent {extent} is not a multiple of the half spacing {}", h / 2.0)));
    }
    Ok(DiscreteDomain::new(extent, cells as usize)?)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn flags(diffs: &[f64], what: &str, warnings: &mut Vec<String>) -> bool {
    for w in diffs.windows(3) {
        if w[1] > w[0] && w[2] > w[1] {
            warnings.push(format!("{what} differences increase over two consecutive increments: {} < {} < {}", w[0], w[1], w[2]));
            break;
        }
    }
    diffs.windows(2).all(|w| w[1] <= w[0])
}

/// Runs `base` on [-R, R]³ for every R at the spacing of `base`, comparing
/// successive final states on the first box.
pub fn sweep_domain(base: &Scenario, extents: &[f64], dir: &Path, workers: usize) -> CliResult<DomainSweep> {
    if extents.is_empty() {
        return Err(CliError::Usage("need at least one extent".into()));
    }
    let h = 2.0 * base.extent / base.cells as f64;
    let inner = domain_with_spacing(extents[0], h)?;
    let mut jobs = Vec::with_capacity(extents.len());
    for (k, &r) in extents.iter().enumerate() {
        let d = domain_with_spacing(r, h)?;
        if r < extents[0] {
            return Err(CliError::Usage(format!("extent {r} is smaller than the comparison box {}", extents[0])));
        }
        let mut s = base.clone();
        s.extent = r;
        s.cells = d.cells();
        s.defect_cells = gcd(s.cells, base.defect_cells);
        s.name = format!("{}-R{}", base.name, r);
        jobs.push((s, dir.join(format!("R{k:02}_{r}"))));
    }
    ensure_dir(dir)?;
    let outcomes = run_all(&jobs, workers)?;
    let g = base.gamma;
    let mut rows = Vec::with_capacity(extents.len());
    let mut dr = Vec::new();
    let mut dm = Vec::new();
    let mut prev: Option<(Vec<f64>, [Vec<f64>; 3])> = None;
    for ((s, _), o) in jobs.iter().zip(&outcomes) {
        let rho = o.final_rho.restrict(&inner)?;
        let m = o.final_momentum.restrict(&inner)?;
        let cur = (rho.values().to_vec(), m.comps().clone());
        let (a, b) = match &prev {
            None => (None, None),
            Some((pr, pm)) => {
                let drho: Vec<f64> = cur.0.iter().zip(pr).map(|(x, y)| x - y).collect();
                let dmom: Vec<f64> = (0..inner.len())
                    .map(|i| (0..3).map(|c| (cur.1[c][i] - pm[c][i]).powi(2)).sum::<f64>().sqrt())
                    .collect();
                let a = lp_norm(&inner, &drho, g);
                let b = lp_norm(&inner, &dmom, 2.0 * g / (g + 1.0));
                dr.push(a);
                dm.push(b);
                (Some(a), Some(b))
            }
        };
        rows.push(DomainRow { extent: s.extent, cells: s.cells, density_difference: a, momentum_difference: b });
        prev = Some(cur);
    }
    let mut warnings = Vec::new();
    let density_nonincreasing = flags(&dr, "density", &mut warnings);
    let momentum_nonincreasing = flags(&dm, "momentum", &mut warnings);
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut csv = String::from("extent,cells,density_difference,momentum_difference\n");
    for r in &rows {
        writeln!(csv, "{},{},{},{}", r.extent, r.cells, opt(r.density_difference), opt(r.momentum_difference)).unwrap();
    }
    let out = DomainSweep { spacing: h, rows, density_nonincreasing, momentum_nonincreasing, warnings };
    write_table(dir, "sweep_domain", &csv, &to_json(&out), 3, "R")?;
    Ok(out)
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_consecutive_increases_warn() {
        let mut w = Vec::new();
        assert!(!flags(&[1.0, 2.0, 3.0], "density", &mut w));
        assert_eq!(w.len(), 1);
        assert!(w[0].starts_with("density"));

        let mut w = Vec::new();
        assert!(!flags(&[3.0, 1.0, 2.0, 1.5], "momentum", &mut w));
        assert!(w.is_empty());
        assert!(flags(&[3.0, 2.0, 2.0, 1.0], "momentum", &mut w));
        assert!(w.is_empty());
    }

    #[test]
    fn spacing_must_divide_the_box() {
        assert_eq!(domain_with_spacing(1.5, 0.25).unwrap().cells(), 12);
        assert!(domain_with_spacing(1.1, 0.25).is_err());
    }
}
