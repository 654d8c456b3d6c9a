//! `audit-rei`: relative entropy of a stored run against a test pair or a
//! reference run.

use std::fs;
use std::path::{Path, PathBuf};

use anisoflow::energy::{budget_residual, EnergyReport};
use anisoflow::grid::{read_snapshot, SnapshotField};
use anisoflow::momentum::Trajectory;
use anisoflow::relent::{gronwall_audit, rei_residual, DefectPolicy, GronwallConstants, TestPair};
use anisoflow::Error;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::runner::{to_json, write_file, REI_REDUCTION_TOL};
use crate::scenario::{ForceKind, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub enum PairSpec {
    FarField,
    Initial,
    Reference(PathBuf),
}

impl PairSpec {
    pub fn parse(s: &str) -> Self {
        match s {
            "far-field" | "far_field" => PairSpec::FarField,
            "initial" => PairSpec::Initial,
            other => PairSpec::Reference(PathBuf::from(other)),
        }
    }
}

fn read_field(path: &Path) -> CliResult<(f64, SnapshotField)> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let snap = read_snapshot(std::io::BufReader::new(f))?;
    Ok((snap.time, snap.field))
}

/// The resolved scenario and every stored snapshot pair of a run directory.
pub fn load_run(dir: &Path) -> CliResult<(Scenario, Trajectory)> {
    let scenario = Scenario::load(&dir.join("scenario.ini"))?;
    let snaps = dir.join("snapshots");
    let mut steps: Vec<usize> = fs::read_dir(&snaps)
        .map_err(|e| CliError::io(&snaps, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_prefix("rho_")?.strip_suffix(".txt")?.parse().ok()
        })
        .collect();
    steps.sort_unstable();
    if steps.is_empty() {
        return Err(CliError::Core(Error::Precondition(format!("no snapshots in {}", snaps.display()))));
    }
    let mut traj = Trajectory::new(scenario.eps);
    for k in steps {
        let (rp, up) = crate::runner::snapshot_paths(dir, k);
        let (t, rho) = read_field(&rp)?;
        let (tu, u) = read_field(&up)?;
        let (SnapshotField::Scalar(rho), SnapshotField::Vector(u)) = (rho, u) else {
            return Err(CliError::Core(Error::Format(format!("snapshot kinds at step {k} do not match rho/u"))));
        };
        if t != tu {
            return Err(CliError::Core(Error::Format(format!("rho and u snapshots at step {k} disagree on time"))));
        }
        traj.push(t, rho, u)?;
    }
    Ok((scenario, traj))
}

#[derive(Debug, Clone, Serialize)]
pub struct GronwallSummary {
    pub sobolev: f64,
    pub beta: f64,
    pub rho_ref_min: f64,
    pub rho_ref_max: f64,
    pub rho_max: f64,
    pub quadratic: f64,
    pub residual_mass: f64,
    pub c_d: f64,
    pub terms: [f64; 3],
    pub c: f64,
    pub envelope_holds: bool,
    pub chain_holds: bool,
    pub violations: Vec<usize>,
    pub final_rel_entropy: f64,
}

impl GronwallSummary {
    fn new(c: &GronwallConstants, envelope_holds: bool, chain_holds: bool, violations: Vec<usize>, final_rel_entropy: f64) -> Self {
        Self {
            sobolev: c.sobolev,
            beta: c.beta,
            rho_ref_min: c.rho_ref_min,
            rho_ref_max: c.rho_ref_max,
            rho_max: c.rho_max,
            quadratic: c.quadratic,
            residual_mass: c.residual_mass,
            c_d: c.c_d,
            terms: c.terms,
            c: c.c,
            envelope_holds,
            chain_holds,
            violations,
            final_rel_entropy,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditSummary {
    pub run: String,
    pub pair: String,
    pub samples: usize,
    pub max_positive_residual: f64,
    /// max |rei_residual − budget_residual|, far-field pair only.
    pub rei_reduction_error: Option<f64>,
    pub gronwall: Option<GronwallSummary>,
    pub passed: bool,
}

/// Audit the run in `run_dir` and write rel_entropy.csv and audit.json to
/// `out`. A failed check is an `Audit` error after the files are written.
pub fn audit_rei(run_dir: &Path, pair: &PairSpec, out: &Path, with_defects: bool) -> CliResult<AuditSummary> {
    let (s, traj) = load_run(run_dir)?;
    let d = *traj.domain().expect("nonempty trajectory");
    let p = s.params()?;
    let law = s.law()?;
    let f = s.force_field(&d)?;
    let policy = if with_defects { DefectPolicy::Coarse(s.defect_cells) } else { DefectPolicy::Zero };
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let (csv, summary) = match pair {
        PairSpec::FarField | PairSpec::Initial => {
            let tp = match pair {
                PairSpec::FarField => TestPair::far_field(d, &law, traj.times())?,
                _ => TestPair::frozen(traj.rho(0).clone(), traj.u(0).clone(), traj.times())?,
            };
            let report = rei_residual(&traj, &tp, &p, &law, &f, policy)?;
            let reduction = if *pair == PairSpec::FarField && !with_defects {
                let energy = EnergyReport::from_trajectory(&traj, &f, &p, &law)?;
                let mut err = 0.0f64;
                for (k, r) in report.residuals().iter().enumerate() {
                    err = err.max((r - budget_residual(&energy, 0, k)?).abs());
                }
                Some(err)
            } else {
                None
            };
            let passed = reduction.is_none_or(|e| e <= REI_REDUCTION_TOL);
            let summary = AuditSummary {
                run: run_dir.display().to_string(),
                pair: if *pair == PairSpec::FarField { "far_field".into() } else { "initial".into() },
                samples: traj.len(),
                max_positive_residual: report.max_positive_residual(),
                rei_reduction_error: reduction,
                gronwall: None,
                passed,
            };
            (report.to_csv(), summary)
        }
        PairSpec::Reference(ref_dir) => {
            if s.force != ForceKind::Zero {
                return Err(CliError::Core(Error::Precondition("the weak-strong audit needs a run without forcing".into())));
            }
            let (_, reference) = load_run(ref_dir)?;
            let g = gronwall_audit(&traj, &reference, &p, &law)?;
            let holds = g.holds();
            let chain = g.chain_holds();
            let summary = AuditSummary {
                run: run_dir.display().to_string(),
                pair: ref_dir.display().to_string(),
                samples: traj.len(),
                max_positive_residual: g.report.max_positive_residual(),
                rei_reduction_error: None,
                gronwall: Some(GronwallSummary::new(&g.constants, holds, chain, g.violations(), g.final_rel_entropy())),
                passed: holds && chain,
            };
            (g.report.to_csv(), summary)
        }
    };
    write_file(&out.join("rel_entropy.csv"), &csv)?;
    write_file(&out.join("audit.json"), &to_json(&summary))?;
    if !summary.passed {
        return Err(CliError::Audit(format!("relative entropy audit of {} failed (see {})", run_dir.display(), out.display())));
    }
    Ok(summary)
}
