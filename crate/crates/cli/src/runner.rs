use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anisoflow::continuity::grad_sq;
use anisoflow::energy::{defect_estimate, energy_terms_fields, EnergyReport};
use anisoflow::grid::{integrate, write_snapshot, EigenOptions, ScalarField, Snapshot, SnapshotField, VectorField};
use anisoflow::momentum::{advance, initial_velocity_projection, FlowState, GalerkinSystem, StepConfig};
use anisoflow::relent::{gronwall_weight, rel_entropy, remainder, rei_residual_series, RelEntropyReport, RelEntropyRow, TestPair};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::plot;
use crate::scenario::{PairKind, Scenario};

/// REI residual against (ρ∞, 0) must reproduce the energy budget residual to this.
pub const REI_REDUCTION_TOL: f64 = 1e-12;
/// Jensen defects may dip below zero by roundoff only.
pub const DEFECT_FLOOR: f64 = -1e-12;
/// Slack on the compatibility interval.
pub const RATIO_SLACK: f64 = 1e-10;

pub const DEFECTS_CSV_HEADER: &str = "step,time,defect_mass,trace_mass,ratio_min,ratio_max,min_defect";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Audits {
    pub budget: bool,
    pub rei_reduction: bool,
    pub defects_nonnegative: bool,
    pub compatibility: bool,
}

impl Audits {
    pub fn all(&self) -> bool {
        self.budget && self.rei_reduction && self.defects_nonnegative && self.compatibility
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub cells: usize,
    pub extent: f64,
    pub spacing: f64,
    pub modes: usize,
    pub steps: usize,
    pub dt: f64,
    pub eps: f64,
    pub final_time: f64,
    pub eigen_cluster_gap: Option<f64>,
    pub initial_energy: f64,
    pub final_kinetic: f64,
    pub final_internal: f64,
    pub final_energy: f64,
    pub initial_mass: f64,
    pub final_mass: f64,
    pub mass_drift: f64,
    pub max_budget_residual: f64,
    pub budget_tolerance: f64,
    pub grad_density_budget: f64,
    pub rei_reduction_error: f64,
    pub defect_mass: f64,
    pub defect_trace_mass: f64,
    pub max_defect_mass: f64,
    pub min_defect: f64,
    pub compatibility_ratio_range: Option<[f64; 2]>,
    pub compatibility_bounds: [f64; 2],
    pub rei_pair: String,
    pub rel_entropy_max_residual: Option<f64>,
    pub max_picard_iterations: usize,
    pub audits: Audits,
    pub audit_passed: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: Option<PathBuf>,
    pub summary: Summary,
    pub energy: EnergyReport,
    pub rel_entropy: Option<RelEntropyReport>,
    pub final_rho: ScalarField,
    pub final_momentum: VectorField,
}

/// Where the run writes: `out` if given, else the scenario's output dir, else
/// `runs/<name>`.
pub fn run_dir(s: &Scenario, out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => p.to_path_buf(),
        None if !s.output_dir.is_empty() => PathBuf::from(&s.output_dir),
        None => Path::new("runs").join(&s.name),
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_field(path: &Path, time: f64, field: SnapshotField) -> CliResult<()> {
    let mut buf = Vec::new();
    write_snapshot(&mut buf, &Snapshot { time, field })?;
    fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

pub fn snapshot_paths(dir: &Path, step: usize) -> (PathBuf, PathBuf) {
    let s = dir.join("snapshots");
    (s.join(format!("rho_{step:06}.txt")), s.join(format!("u_{step:06}.txt")))
}

/// Run a scenario to its final time. With `out = None` nothing is written.
/// Audit failures are reported in the summary, not as errors.
pub fn execute(s: &Scenario, out: Option<&Path>) -> CliResult<RunOutcome> {
    s.validate()?;
    let d = s.domain()?;
    let p = s.params()?;
    let law = s.law()?;
    let opts = EigenOptions { seed: s.seed, ..EigenOptions::default() };
    let sys = GalerkinSystem::build_with(&d, &p, s.modes, &opts)?;
    let f = s.force_field(&d)?;
    let cfg = StepConfig { eps: s.eps, dt: s.dt, theta: s.picard_theta, tol: s.picard_tol, max_iter: s.picard_max };
    cfg.validate()?;

    let rho0 = s.initial_density(&d)?;
    let u_raw = s.initial_velocity(&d)?;
    let coeffs = initial_velocity_projection(&u_raw.mul_scalar(&rho0)?, &rho0, sys.basis())?;
    let mut state = FlowState::new(rho0, coeffs)?;

    let steps = s.steps();
    let mut times = Vec::with_capacity(steps + 1);
    times.push(state.time);
    for k in 0..steps {
        times.push(times[k] + s.dt);
    }
    let far = TestPair::far_field(d, &law, &times)?;
    let u0 = state.velocity(&sys);
    let chosen = match s.rei_pair {
        PairKind::None => None,
        PairKind::FarField => Some(far.clone()),
        PairKind::Initial => Some(TestPair::frozen(state.rho.clone(), u0.clone(), &times)?),
    };

    if let Some(dir) = out {
        fs::create_dir_all(dir.join("snapshots")).map_err(|e| CliError::io(dir, e))?;
        write_file(&dir.join("scenario.ini"), &s.to_resolved_string())?;
    }

    let mut energy = EnergyReport::new();
    let mut defects_csv = String::new();
    writeln!(defects_csv, "{DEFECTS_CSV_HEADER}").unwrap();
    let (d_lo, d_hi) = law.compatibility_bounds();
    let mut ff_rel = Vec::with_capacity(steps + 1);
    let mut ff_rem = Vec::with_capacity(steps + 1);
    let mut pair_rel = Vec::new();
    let mut pair_rem = Vec::new();
    let mut pair_h = Vec::new();
    let mut ratio: Option<[f64; 2]> = None;
    let mut min_defect = f64::INFINITY;
    let mut max_defect_mass = 0.0f64;
    let mut max_grad = 0.0f64;
    let mut max_picard = 0;
    let mut last_defect = None;
    let initial_mass = integrate(&state.rho);

    let mut u = u0;
    for k in 0..=steps {
        if k > 0 {
            let (next, info) = advance(&state, &f, &sys, &law, &cfg)?;
            max_picard = max_picard.max(info.picard_iterations);
            state = next;
            u = state.velocity(&sys);
        }
        let rho = &state.rho;
        energy.push(energy_terms_fields(rho, &u, times[k], &f, &p, &law, s.eps)?);
        let m = u.mul_scalar(rho)?;
        let est = defect_estimate(rho, &m, s.defect_cells, &law)?;
        let range = est.ratio_range();
        if let Some((a, b)) = range {
            ratio = Some(match ratio {
                None => [a, b],
                Some([lo, hi]) => [lo.min(a), hi.max(b)],
            });
        }
        min_defect = min_defect.min(est.min_defect());
        max_defect_mass = max_defect_mass.max(est.mass());
        let (rl, rh) = range.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
        writeln!(defects_csv, "{k},{},{},{},{rl},{rh},{}", times[k], est.mass(), est.trace_mass(), est.min_defect()).unwrap();
        max_grad = max_grad.max(grad_sq(rho));

        let fs_ = far.sample(k);
        ff_rel.push(rel_entropy(rho, &u, &fs_, None, &law)?);
        ff_rem.push(remainder(rho, &u, &fs_, None, &p, &law, &f, s.eps)?.total());
        if let Some(pair) = &chosen {
            let ps = pair.sample(k);
            pair_rel.push(rel_entropy(rho, &u, &ps, None, &law)?);
            pair_rem.push(remainder(rho, &u, &ps, None, &p, &law, &f, s.eps)?.total());
            pair_h.push(gronwall_weight(ps.u));
        }
        if let Some(dir) = out {
            let every = s.snapshot_every;
            if k == 0 || k == steps || (every > 0 && k % every == 0) {
                let (rp, up) = snapshot_paths(dir, k);
                write_field(&rp, times[k], SnapshotField::Scalar(rho.clone()))?;
                write_field(&up, times[k], SnapshotField::Vector(u.clone()))?;
            }
        }
        last_defect = Some(est);
    }

    let budget = energy.residuals();
    let ff_residual = rei_residual_series(energy.rows(), &ff_rel, &ff_rem);
    let rei_reduction_error = budget.iter().zip(&ff_residual).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let rel_report = chosen.as_ref().map(|_| {
        let residual = rei_residual_series(energy.rows(), &pair_rel, &pair_rem);
        RelEntropyReport::from_rows(
            (0..=steps)
                .map(|k| RelEntropyRow {
                    time: times[k],
                    rel_entropy: pair_rel[k],
                    remainder: pair_rem[k],
                    h: pair_h[k],
                    residual: residual[k],
                    envelope: None,
                })
                .collect(),
        )
    });

    let rows = energy.rows();
    let first = rows[0];
    let last = *rows.last().expect("at least one row");
    let max_energy = rows.iter().map(|r| r.energy()).fold(0.0f64, f64::max);
    let max_budget_residual = budget.iter().fold(0.0f64, |m, &r| m.max(r));
    let budget_tolerance = s.budget_slack * s.dt * max_energy;
    let final_mass = integrate(&state.rho);
    let last_defect = last_defect.expect("at least one level");
    let audits = Audits {
        budget: max_budget_residual <= budget_tolerance + 1e-12,
        rei_reduction: rei_reduction_error <= REI_REDUCTION_TOL,
        defects_nonnegative: min_defect >= DEFECT_FLOOR,
        compatibility: ratio.is_none_or(|[lo, hi]| lo >= d_lo - RATIO_SLACK && hi <= d_hi + RATIO_SLACK),
    };
    let summary = Summary {
        name: s.name.clone(),
        cells: s.cells,
        extent: s.extent,
        spacing: d.spacing(),
        modes: s.modes,
        steps,
        dt: s.dt,
        eps: s.eps,
        final_time: times[steps],
        eigen_cluster_gap: sys.basis().cluster_gap(),
        initial_energy: first.energy(),
        final_kinetic: last.kinetic,
        final_internal: last.internal,
        final_energy: last.energy(),
        initial_mass,
        final_mass,
        mass_drift: (final_mass - initial_mass).abs() / initial_mass,
        max_budget_residual,
        budget_tolerance,
        grad_density_budget: s.eps * max_grad,
        rei_reduction_error,
        defect_mass: last_defect.mass(),
        defect_trace_mass: last_defect.trace_mass(),
        max_defect_mass,
        min_defect,
        compatibility_ratio_range: ratio,
        compatibility_bounds: [d_lo, d_hi],
        rei_pair: s.rei_pair.keyword().into(),
        rel_entropy_max_residual: rel_report.as_ref().map(|r| r.max_positive_residual()),
        max_picard_iterations: max_picard,
        audit_passed: audits.all(),
        audits,
    };

    if let Some(dir) = out {
        write_file(&dir.join("energy.csv"), &energy.to_csv())?;
        write_file(&dir.join("defects.csv"), &defects_csv)?;
        if let Some(r) = &rel_report {
            write_file(&dir.join("rel_entropy.csv"), &r.to_csv())?;
        }
        write_file(&dir.join("summary.json"), &to_json(&summary))?;
        write_file(&dir.join("plot.gp"), &plot::run_script(rel_report.is_some()))?;
    }

    let final_momentum = u.mul_scalar(&state.rho)?;
    Ok(RunOutcome {
        dir: out.map(Path::to_path_buf),
        summary,
        energy,
        rel_entropy: rel_report,
        final_rho: state.rho,
        final_momentum,
    })
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("summary serializes");
    s.push('\n');
    s
}

/// `execute` followed by the audit verdict: exit class 5 when any audit fails.
pub fn run(s: &Scenario, out: &Path) -> CliResult<RunOutcome> {
    let outcome = execute(s, Some(out))?;
    if !outcome.summary.audit_passed {
        let a = outcome.summary.audits;
        return Err(CliError::Audit(format!(
            "{}: budget {}, rei_reduction {}, defects_nonnegative {}, compatibility {} (see {})",
            s.name,
            a.budget,
            a.rei_reduction,
            a.defects_nonnegative,
            a.compatibility,
            out.join("summary.json").display()
        )));
    }
    Ok(outcome)
}
