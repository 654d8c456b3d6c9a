//! Energy budget of a trajectory, the force-term majorant, and coarse-cell
//! Jensen-gap estimators of the kinetic and pressure defects.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::ops::{dirichlet_parts, for_each_face};
use crate::grid::{lp_norm, sobolev_constant, weighted_sum, ScalarField, VectorField};
use crate::momentum::{FlowState, GalerkinSystem, Trajectory};
use crate::thermo::{sandwich_constants, PressureLaw};
use crate::visc::ViscosityParams;

/// Every term of the energy balance at one time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub time: f64,
    /// ∫½ρ|u|²
    pub kinetic: f64,
    /// ∫E^ρ∞(ρ)
    pub internal: f64,
    /// μ∫|∇ₓu|²
    pub diss_horizontal: f64,
    /// δ∫|∂_z u|²
    pub diss_vertical: f64,
    /// (μ+λ)∫(div u)²
    pub diss_bulk: f64,
    /// ε Σ_faces (ΔP′(ρ))(Δρ)/h², the discrete εγ∫ρ^{γ−2}|∇ρ|²
    pub eps_term: f64,
    /// ∫ρf·u
    pub force_work: f64,
}

impl EnergyRow {
    pub fn energy(&self) -> f64 {
        self.kinetic + self.internal
    }
    pub fn dissipation(&self) -> f64 {
        self.diss_horizontal + self.diss_vertical + self.diss_bulk
    }
}

/// ε·Σ_faces w (P′(ρ⁺) − P′(ρ⁻))(ρ⁺ − ρ⁻)/h².
pub fn eps_dissipation(rho: &ScalarField, law: &PressureLaw, eps: f64) -> f64 {
    let d = rho.domain();
    let r = rho.values();
    let h2 = d.spacing().powi(2);
    let mut acc = 0.0;
    for axis in 0..3 {
        for_each_face(d, axis, |lo, hi, w| {
            acc += w * (law.dpot(r[hi]) - law.dpot(r[lo])) * (r[hi] - r[lo]) / h2;
        });
    }
    eps * acc
}

/// Evaluate one row from a density and a velocity field.
pub fn energy_terms_fields(
    rho: &ScalarField,
    u: &VectorField,
    time: f64,
    f: &VectorField,
    p: &ViscosityParams,
    law: &PressureLaw,
    eps: f64,
) -> Result<EnergyRow> {
    let d = rho.domain();
    if !d.same_grid(u.domain()) || !d.same_grid(f.domain()) {
        return Err(Error::Domain("fields live on different grids".into()));
    }
    let r = rho.values();
    let kinetic = 0.5 * weighted_sum(d, |i| {
        let v = u.at(i);
        r[i] * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    });
    let internal = weighted_sum(d, |i| law.rel_inf(r[i]));
    let [horiz, vert, divdiv] = dirichlet_parts(u);
    let force_work = weighted_sum(d, |i| {
        let a = u.at(i);
        let b = f.at(i);
        r[i] * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
    });
    Ok(EnergyRow {
        time,
        kinetic,
        internal,
        diss_horizontal: p.mu() * horiz,
        diss_vertical: p.delta() * vert,
        diss_bulk: p.bulk() * divdiv,
        eps_term: eps_dissipation(rho, law, eps),
        force_work,
    })
}

pub fn energy_terms(
    state: &FlowState,
    f: &VectorField,
    sys: &GalerkinSystem,
    law: &PressureLaw,
    eps: f64,
) -> Result<EnergyRow> {
    let u = state.velocity(sys);
    energy_terms_fields(&state.rho, &u, state.time, f, sys.params(), law, eps)
}

/// Rows of one trajectory, one per time level starting at t = 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyReport {
    rows: Vec<EnergyRow>,
}

pub const ENERGY_CSV_HEADER: &str =
    "step,time,kinetic,internal,diss_horizontal,diss_vertical,diss_bulk,eps_term,force_work,budget_residual";

impl EnergyReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// One row per sample of `traj`, with a time-independent force.
    pub fn from_trajectory(traj: &Trajectory, f: &VectorField, p: &ViscosityParams, law: &PressureLaw) -> Result<Self> {
        let mut rep = Self::new();
        for (k, &t) in traj.times().iter().enumerate() {
            rep.push(energy_terms_fields(traj.rho(k), traj.u(k), t, f, p, law, traj.eps())?);
        }
        Ok(rep)
    }
    pub fn push(&mut self, row: EnergyRow) {
        self.rows.push(row);
    }
    pub fn rows(&self) -> &[EnergyRow] {
        &self.rows
    }
    pub fn len(&self) -> usize {
        self.rows.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// budget_residual(0, k) for every k.
    pub fn residuals(&self) -> Vec<f64> {
        (0..self.rows.len()).map(|k| budget_residual(self, 0, k).unwrap_or(0.0)).collect()
    }

    /// Largest positive part of budget_residual(0, k).
    pub fn max_positive_residual(&self) -> f64 {
        self.residuals().into_iter().fold(0.0, |m, r| m.max(r))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{ENERGY_CSV_HEADER}").unwrap();
        for (k, (r, res)) in self.rows.iter().zip(self.residuals()).enumerate() {
            writeln!(
                s,
                "{k},{},{},{},{},{},{},{},{},{}",
                r.time,
                r.kinetic,
                r.internal,
                r.diss_horizontal,
                r.diss_vertical,
                r.diss_bulk,
                r.eps_term,
                r.force_work,
                res
            )
            .unwrap();
        }
        s
    }
}

/// Accumulated right-endpoint sums Σ_{k=t0+1}^{t1} (tₖ − tₖ₋₁)·g(rowₖ).
/// Trapezoid rule for ∫ g over (times[t0], times[t1]).
pub(crate) fn trapezoid_sum(times: &[f64], values: &[f64], t0: usize, t1: usize) -> f64 {
    let mut acc = 0.0;
    for k in t0 + 1..=t1 {
        acc += 0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]);
    }
    acc
}

pub(crate) fn accumulate(rows: &[EnergyRow], t0: usize, t1: usize, g: impl Fn(&EnergyRow) -> f64) -> f64 {
    let times: Vec<f64> = rows.iter().map(|r| r.time).collect();
    let values: Vec<f64> = rows.iter().map(g).collect();
    trapezoid_sum(&times, &values, t0, t1)
}

/// [E(t1) + ∫dissipation + ∫ε-term] − [E(t0) + ∫force work] over (t0, t1].
///
/// Positive values violate the energy inequality.
pub fn budget_residual(report: &EnergyReport, t0: usize, t1: usize) -> Result<f64> {
    let rows = &report.rows;
    if t1 >= rows.len() || t0 > t1 {
        return Err(Error::Domain(format!("window ({t0}, {t1}) outside 0..{}", rows.len())));
    }
    let lhs = rows[t1].energy() + accumulate(rows, t0, t1, |r| r.dissipation() + r.eps_term);
    let rhs = rows[t0].energy() + accumulate(rows, t0, t1, |r| r.force_work);
    Ok(lhs - rhs)
}

/// Pointwise-in-time form of the force-term splitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceBound {
    pub lhs: f64,
    pub rhs: f64,
    /// C(β)‖f‖²_{6/5} + (β/4)‖∇u‖²: essential part and ρ∞ shift.
    pub essential: f64,
    /// ∫(½ρ|u|² + E) + (β/4)‖∇u‖² + the two ‖f‖^{2γ/(γ−1)} terms.
    pub residual: f64,
}

/// |∫ρf·u| against the majorant
/// C(β)‖f‖²_{6/5} + (β/2)‖∇u‖² + ∫(½ρ|u|² + E^ρ∞(ρ))
/// plus C‖f‖^{2γ/(γ−1)}_{2γ/(γ−1)} + C(β)‖f‖^{2γ/(γ−1)}_{6γ/(5γ−3)},
/// with the constants produced by the Young/Hölder/Sobolev steps.
pub fn force_term_bound(
    rho: &ScalarField,
    u: &VectorField,
    f: &VectorField,
    law: &PressureLaw,
    p: &ViscosityParams,
) -> Result<ForceBound> {
    let d = rho.domain();
    let g = law.gamma();
    let ri = law.rho_inf();
    let beta = p.beta();
    let cs = sobolev_constant(d);
    let r = rho.values();
    let lhs = weighted_sum(d, |i| {
        let a = u.at(i);
        let b = f.at(i);
        r[i] * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
    })
    .abs();

    let fmag: Vec<f64> = (0..d.len()).map(|i| f.at(i).iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let [horiz, vert, _] = dirichlet_parts(u);
    let grad_sq = horiz + vert;
    let f65 = lp_norm(d, &fmag, 6.0 / 5.0);
    let q = 2.0 * g / (g - 1.0);
    let f_q = lp_norm(d, &fmag, q);
    let f_mid = lp_norm(d, &fmag, 6.0 * g / (5.0 * g - 3.0));

    // 2ρ∞‖f‖_{6/5}C_S‖∇u‖ ≤ (β/4)‖∇u‖² + (4ρ∞²C_S²/β)‖f‖²_{6/5}
    let essential = 4.0 * ri * ri * cs * cs / beta * f65 * f65 + 0.25 * beta * grad_sq;

    // X = ‖[1]_res √|ρ−ρ∞|‖_{2γ}, with X^{2γ} ≤ C₂∫E^ρ∞ on the residual set.
    let rho_max = rho.max().max(2.0 * ri) * 1.01;
    let c2 = sandwich_constants(law, rho_max)?.big_c2;
    let kinetic = 0.5 * weighted_sum(d, |i| {
        let a = u.at(i);
        r[i] * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
    });
    let internal = weighted_sum(d, |i| law.rel_inf(r[i]));
    // ‖√ρu‖·X·‖f‖_q ≤ ½‖√ρu‖² + ½X²F², X²F² ≤ κX^{2γ}/γ + κ^{−1/(γ−1)}(γ−1)/γ·F^q,
    // κ = γ/(2C₂) puts ½∫E on the X^{2γ} side.
    let kappa = g / (2.0 * c2.max(f64::MIN_POSITIVE));
    let young = |k: f64, x: f64| k.powf(-1.0 / (g - 1.0)) * (g - 1.0) / g * x.powf(q);
    let part_a = 0.5 * young(kappa, f_q);
    // √ρ∞·X·C_S‖∇u‖·G ≤ (β/4)‖∇u‖² + (ρ∞C_S²/β)X²G², same split with κ'.
    let w = ri * cs * cs / beta;
    let kappa2 = g / (2.0 * w * c2.max(f64::MIN_POSITIVE));
    let part_b = w * young(kappa2, f_mid);
    let residual = kinetic + internal + 0.25 * beta * grad_sq + part_a + part_b;
    Ok(ForceBound { lhs, rhs: essential + residual, essential, residual })
}

/// Jensen gaps of one coarse cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellDefect {
    pub volume: f64,
    /// avg(|m|²/ρ) − |avg m|²/avg ρ
    pub kinetic: f64,
    /// avg E^ρ∞(ρ) − E^ρ∞(avg ρ)
    pub internal: f64,
    /// avg p(ρ) − p(avg ρ)
    pub pressure: f64,
    /// Reynolds surrogate: Jensen gap of m⊗m/ρ plus pressure·I.
    pub reynolds: [[f64; 3]; 3],
}

impl CellDefect {
    pub fn energy(&self) -> f64 {
        self.kinetic + self.internal
    }
    pub fn trace(&self) -> f64 {
        self.reynolds[0][0] + self.reynolds[1][1] + self.reynolds[2][2]
    }
    /// tr ℜ / 𝔈 where 𝔈 > 0.
    pub fn ratio(&self) -> Option<f64> {
        let e = self.energy();
        if e > 0.0 {
            Some(self.trace() / e)
        } else {
            None
        }
    }
}

fn kinetic_tensor(rho: f64, m: [f64; 3]) -> Result<[[f64; 3]; 3]> {
    if rho > 0.0 {
        Ok([0, 1, 2].map(|a| [0, 1, 2].map(|b| m[a] * m[b] / rho)))
    } else if m == [0.0; 3] {
        Ok([[0.0; 3]; 3])
    } else {
        Err(Error::Domain("momentum without mass: kinetic energy density is infinite".into()))
    }
}

/// Jensen gaps of a weighted sample.
pub fn jensen_cell(law: &PressureLaw, weights: &[f64], rho: &[f64], m: &[[f64; 3]]) -> Result<CellDefect> {
    if weights.len() != rho.len() || rho.len() != m.len() || rho.is_empty() {
        return Err(Error::Domain("cell samples have inconsistent lengths".into()));
    }
    let vol: f64 = weights.iter().sum();
    let mut r_avg = 0.0;
    let mut m_avg = [0.0; 3];
    let mut t_avg = [[0.0; 3]; 3];
    let mut e_avg = 0.0;
    let mut p_avg = 0.0;
    for i in 0..rho.len() {
        let w = weights[i] / vol;
        r_avg += w * rho[i];
        for a in 0..3 {
            m_avg[a] += w * m[i][a];
        }
        let t = kinetic_tensor(rho[i], m[i])?;
        for a in 0..3 {
            for b in 0..3 {
                t_avg[a][b] += w * t[a][b];
            }
        }
        e_avg += w * law.rel_inf(rho[i]);
        p_avg += w * law.p(rho[i]);
    }
    let t_bar = kinetic_tensor(r_avg, m_avg)?;
    let pressure = p_avg - law.p(r_avg);
    let mut reynolds = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            reynolds[a][b] = t_avg[a][b] - t_bar[a][b];
        }
        reynolds[a][a] += pressure;
    }
    let kinetic = (t_avg[0][0] + t_avg[1][1] + t_avg[2][2]) - (t_bar[0][0] + t_bar[1][1] + t_bar[2][2]);
    Ok(CellDefect { volume: vol, kinetic, internal: e_avg - law.rel_inf(r_avg), pressure, reynolds })
}

/// Coarse-cell defect fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectEstimate {
    pub coarse_cells: usize,
    pub cells: Vec<CellDefect>,
}

impl DefectEstimate {
    /// Σ vol·(𝔈₂ + 𝔈₃).
    pub fn mass(&self) -> f64 {
        self.cells.iter().map(|c| c.volume * c.energy()).sum()
    }
    /// Σ vol·tr ℜ.
    pub fn trace_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.volume * c.trace()).sum()
    }
    /// (min, max) of the compatibility ratio over cells with positive 𝔈.
    pub fn ratio_range(&self) -> Option<(f64, f64)> {
        let mut it = self.cells.iter().filter_map(|c| c.ratio());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), r| (lo.min(r), hi.max(r))))
    }
    pub fn min_defect(&self) -> f64 {
        self.cells.iter().map(|c| c.kinetic.min(c.internal)).fold(f64::INFINITY, f64::min)
    }
}

/// Partition the grid into `coarse_cells`³ boxes and take Jensen gaps of
/// (ρ, m) in each. Interface nodes are shared with trapezoid weights.
pub fn defect_estimate(rho: &ScalarField, m: &VectorField, coarse_cells: usize, law: &PressureLaw) -> Result<DefectEstimate> {
    let d = rho.domain();
    if !d.same_grid(m.domain()) {
        return Err(Error::Domain("density and momentum live on different grids".into()));
    }
    let n = d.cells();
    if coarse_cells == 0 || !n.is_multiple_of(coarse_cells) {
        return Err(Error::Domain(format!("{coarse_cells} coarse cells do not divide {n} grid cells")));
    }
    let s = n / coarse_cells;
    let h = d.spacing();
    let t = |i: usize| if i == 0 || i == s { 0.5 } else { 1.0 };
    let mut cells = Vec::with_capacity(coarse_cells.pow(3));
    let mut w = Vec::new();
    let mut rv = Vec::new();
    let mut mv = Vec::new();
    for ci in 0..coarse_cells {
        for cj in 0..coarse_cells {
            for ck in 0..coarse_cells {
                w.clear();
                rv.clear();
                mv.clear();
                for a in 0..=s {
                    for b in 0..=s {
                        for c in 0..=s {
                            let idx = d.index(ci * s + a, cj * s + b, ck * s + c);
                            w.push(h * h * h * t(a) * t(b) * t(c));
                            rv.push(rho.values()[idx]);
                            mv.push(m.at(idx));
                        }
                    }
                }
                cells.push(jensen_cell(law, &w, &rv, &mv)?);
            }
        }
    }
    Ok(DefectEstimate { coarse_cells, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DiscreteDomain;

    #[test]
    fn two_value_cell_by_hand() {
        let law = PressureLaw::new(2.0, 1.0).unwrap();
        let c = jensen_cell(&law, &[1.0, 1.0], &[1.0, 3.0], &[[0.0; 3]; 2]).unwrap();
        assert!((c.pressure - 1.0).abs() < 1e-14);
        assert!((c.internal - 1.0).abs() < 1e-14);
        assert_eq!(c.kinetic, 0.0);
        assert!((c.ratio().unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn vacuum_cases() {
        let law = PressureLaw::new(1.4, 1.0).unwrap();
        let ok = jensen_cell(&law, &[1.0, 1.0], &[0.0, 2.0], &[[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        assert!(ok.kinetic >= 0.0);
        assert!(jensen_cell(&law, &[1.0, 1.0], &[0.0, 2.0], &[[1.0, 0.0, 0.0]; 2]).is_err());
    }

    #[test]
    fn constant_state_has_no_defect() {
        let d = DiscreteDomain::new(1.0, 8).unwrap();
        let law = PressureLaw::new(1.4, 1.0).unwrap();
        let rho = ScalarField::constant(d, 1.3);
        let m = VectorField::from_fn(d, |_| [0.2, -0.1, 0.4]);
        let est = defect_estimate(&rho, &m, 4, &law).unwrap();
        assert!(est.mass().abs() < 1e-14);
        assert!(est.ratio_range().is_none() || est.cells.iter().all(|c| c.energy().abs() < 1e-14));
        assert!(defect_estimate(&rho, &m, 3, &law).is_err());
    }

    #[test]
    fn rest_row_is_zero() {
        let d = DiscreteDomain::new(1.0, 6).unwrap();
        let law = PressureLaw::new(2.0, 1.0).unwrap();
        let p = ViscosityParams::new(1.0, 1.0, 0.0).unwrap();
        let z = VectorField::zeros(d);
        let row = energy_terms_fields(&ScalarField::constant(d, 1.0), &z, 0.0, &z, &p, &law, 0.1).unwrap();
        assert_eq!(row.energy() + row.dissipation() + row.eps_term + row.force_work, 0.0);
    }

    #[test]
    fn internal_energy_for_quadratic_law() {
        let d = DiscreteDomain::new(1.0, 8).unwrap();
        let law = PressureLaw::new(2.0, 1.0).unwrap();
        let p = ViscosityParams::new(1.0, 1.0, 0.0).unwrap();
        let bump = |y: [f64; 3]| (-(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]) * 3.0).exp();
        let rho = ScalarField::from_fn(d, |y| 1.0 + 0.1 * bump(y));
        let z = VectorField::zeros(d);
        let row = energy_terms_fields(&rho, &z, 0.0, &z, &p, &law, 0.0).unwrap();
        let expect = crate::grid::integrate(&ScalarField::from_fn(d, |y| 0.01 * bump(y) * bump(y)));
        assert!((row.internal - expect).abs() < 1e-14);
    }
}
