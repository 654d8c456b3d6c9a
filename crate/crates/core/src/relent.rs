//! Relative entropy with respect to a test pair (r, U), the remainder of the
//! relative entropy inequality, its residual along a trajectory, and the
//! weak-strong Gronwall audit of a coarse run against a reference run.

use std::fmt::Write as _;

use crate::energy::{accumulate, defect_estimate, trapezoid_sum, DefectEstimate, EnergyReport, EnergyRow};
use crate::error::{Error, Result};
use crate::grid::ops::{aniso_laplacian, diff, div, for_each_face, neumann_laplacian, viscous_pairing};
use crate::grid::{lp_norm, sobolev_constant, weighted_sum, DiscreteDomain, ScalarField, VectorField};
use crate::momentum::Trajectory;
use crate::thermo::{quadratic_sandwich, residual_mass_constant, PressureLaw};
use crate::visc::ViscosityParams;

/// Reference densities below `DENSITY_FLOOR·ρ∞` fail the audit precondition.
pub const DENSITY_FLOOR: f64 = 1e-6;

/// Time-dependent test functions (r, U) with their time derivatives, sampled
/// at the times of the trajectory they are paired with.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPair {
    times: Vec<f64>,
    r: Vec<ScalarField>,
    u: Vec<VectorField>,
    dr: Vec<ScalarField>,
    du: Vec<VectorField>,
}

/// One time level of a [`TestPair`].
#[derive(Debug, Clone, Copy)]
pub struct PairSample<'a> {
    pub r: &'a ScalarField,
    pub u: &'a VectorField,
    pub dr: &'a ScalarField,
    pub du: &'a VectorField,
}

/// Weights of the derivative at `times[k]` of the Lagrange interpolant
/// through up to three neighbouring samples (central inside, one-sided at the
/// ends).
fn derivative_stencil(times: &[f64], k: usize) -> Vec<(usize, f64)> {
    let n = times.len();
    if n < 2 {
        return Vec::new();
    }
    let nodes: Vec<usize> = if n == 2 {
        vec![0, 1]
    } else if k == 0 {
        vec![0, 1, 2]
    } else if k == n - 1 {
        vec![n - 3, n - 2, n - 1]
    } else {
        vec![k - 1, k, k + 1]
    };
    let x = times[k];
    nodes
        .iter()
        .map(|&j| {
            let w = if j == k {
                nodes.iter().filter(|&&i| i != k).map(|&i| 1.0 / (x - times[i])).sum()
            } else {
                let num: f64 = nodes.iter().filter(|&&i| i != j && i != k).map(|&i| x - times[i]).product();
                let den: f64 = nodes.iter().filter(|&&i| i != j).map(|&i| times[j] - times[i]).product();
                num / den
            };
            (j, w)
        })
        .collect()
}

fn combine_scalar(fields: &[ScalarField], stencil: &[(usize, f64)], domain: DiscreteDomain) -> ScalarField {
    let mut out = vec![0.0; domain.len()];
    for &(j, w) in stencil {
        for (o, v) in out.iter_mut().zip(fields[j].values()) {
            *o += w * v;
        }
    }
    ScalarField::new(domain, out).expect("same domain")
}

fn combine_vector(fields: &[VectorField], stencil: &[(usize, f64)], domain: DiscreteDomain) -> VectorField {
    let mut out = VectorField::zeros(domain);
    for c in 0..3 {
        let dst = out.comp_mut(c);
        for &(j, w) in stencil {
            for (o, v) in dst.iter_mut().zip(fields[j].comp(c)) {
                *o += w * v;
            }
        }
    }
    out
}

impl TestPair {
    /// Time derivatives by second-order differences in time.
    pub fn new(times: Vec<f64>, r: Vec<ScalarField>, u: Vec<VectorField>) -> Result<Self> {
        if r.is_empty() {
            return Err(Error::Domain("a test pair needs at least one sample".into()));
        }
        let d = *r[0].domain();
        let dr = (0..times.len()).map(|k| combine_scalar(&r, &derivative_stencil(&times, k), d)).collect();
        let du = (0..times.len()).map(|k| combine_vector(&u, &derivative_stencil(&times, k), d)).collect();
        Self::with_derivatives(times, r, u, dr, du)
    }

    pub fn with_derivatives(
        times: Vec<f64>,
        r: Vec<ScalarField>,
        u: Vec<VectorField>,
        dr: Vec<ScalarField>,
        du: Vec<VectorField>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 || r.len() != n || u.len() != n || dr.len() != n || du.len() != n {
            return Err(Error::Domain("test pair samples have inconsistent lengths".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("test pair times must increase".into()));
        }
        let d = *r[0].domain();
        for k in 0..n {
            for g in [r[k].domain(), u[k].domain(), dr[k].domain(), du[k].domain()] {
                if !d.same_grid(g) {
                    return Err(Error::Domain("test pair samples live on different grids".into()));
                }
            }
            if !(r[k].min() > 0.0) {
                return Err(Error::Domain(format!("test density is not positive at t = {}", times[k])));
            }
            if !u[k].vanishes_on_boundary() {
                return Err(Error::Domain(format!("test velocity does not vanish on the boundary at t = {}", times[k])));
            }
        }
        Ok(Self { times, r, u, dr, du })
    }

    /// A pair constant in time.
    pub fn frozen(r: ScalarField, u: VectorField, times: &[f64]) -> Result<Self> {
        let d = *r.domain();
        let n = times.len();
        Self::with_derivatives(
            times.to_vec(),
            vec![r; n],
            vec![u; n],
            vec![ScalarField::zeros(d); n],
            vec![VectorField::zeros(d); n],
        )
    }

    /// (ρ∞, 0).
    pub fn far_field(domain: DiscreteDomain, law: &PressureLaw, times: &[f64]) -> Result<Self> {
        Self::frozen(ScalarField::constant(domain, law.rho_inf()), VectorField::zeros(domain), times)
    }

    /// The density and velocity of a run used as test functions.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let d = *traj.domain().ok_or_else(|| Error::Domain("empty trajectory".into()))?;
        let all: Vec<usize> = (0..traj.len()).collect();
        Self::sampled(traj, &all, &d)
    }

    /// Samples `indices` of `traj`, with derivatives taken along the full
    /// trajectory, moved to `target` by tricubic interpolation.
    pub fn sampled(traj: &Trajectory, indices: &[usize], target: &DiscreteDomain) -> Result<Self> {
        let src = *traj.domain().ok_or_else(|| Error::Domain("empty trajectory".into()))?;
        let same = src.same_grid(target);
        let move_s = |f: ScalarField| if same { Ok(f) } else { f.interpolate_cubic(target) };
        let move_v = |f: VectorField| if same { Ok(f) } else { f.interpolate_cubic(target) };
        let times = traj.times();
        let (mut t, mut r, mut u, mut dr, mut du) = (vec![], vec![], vec![], vec![], vec![]);
        for &k in indices {
            if k >= traj.len() {
                return Err(Error::Domain(format!("sample {k} outside a trajectory of {}", traj.len())));
            }
            let st = derivative_stencil(times, k);
            let mut ds = vec![0.0; src.len()];
            let mut dv = VectorField::zeros(src);
            for &(j, w) in &st {
                for (o, v) in ds.iter_mut().zip(traj.rho(j).values()) {
                    *o += w * v;
                }
                for c in 0..3 {
                    for (o, v) in dv.comp_mut(c).iter_mut().zip(traj.u(j).comp(c)) {
                        *o += w * v;
                    }
                }
            }
            t.push(times[k]);
            r.push(move_s(traj.rho(k).clone())?);
            u.push(move_v(traj.u(k).clone())?);
            dr.push(move_s(ScalarField::new(src, ds)?)?);
            du.push(move_v(dv)?);
        }
        Self::with_derivatives(t, r, u, dr, du)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn domain(&self) -> &DiscreteDomain {
        self.r[0].domain()
    }
    pub fn sample(&self, k: usize) -> PairSample<'_> {
        PairSample { r: &self.r[k], u: &self.u[k], dr: &self.dr[k], du: &self.du[k] }
    }
}

fn check_grids(rho: &ScalarField, u: &VectorField, pair: &PairSample) -> Result<()> {
    let d = rho.domain();
    if !d.same_grid(u.domain()) || !d.same_grid(pair.r.domain()) || !d.same_grid(pair.u.domain()) {
        return Err(Error::Domain("flow state and test pair live on different grids".into()));
    }
    Ok(())
}

/// ∫(½ρ|u−U|² + E^r(ρ)) plus the mass of the defect estimate.
pub fn rel_entropy(
    rho: &ScalarField,
    u: &VectorField,
    pair: &PairSample,
    defect: Option<&DefectEstimate>,
    law: &PressureLaw,
) -> Result<f64> {
    check_grids(rho, u, pair)?;
    let d = rho.domain();
    let rv = rho.values();
    let r = pair.r.values();
    let kinetic = 0.5 * weighted_sum(d, |i| {
        let a = u.at(i);
        let b = pair.u.at(i);
        let w = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        rv[i] * (w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    });
    let internal = weighted_sum(d, |i| law.rel(rv[i], r[i]));
    Ok(kinetic + internal + defect.map_or(0.0, |e| e.mass()))
}

/// The remainder split by term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RemainderTerms {
    /// a_h(u, U)
    pub viscous: f64,
    /// −∫ρ(u−U)·(∂ₜU + u·∇U)
    pub transport: f64,
    /// −∫p(ρ) div U
    pub pressure: f64,
    /// −∫(ρ−r)∂ₜP′(r)
    pub potential_time: f64,
    /// −∫ρu·∇P′(r)
    pub potential_flux: f64,
    /// ∫ρf·(u−U)
    pub force: f64,
    /// −⟨∇U, ℜ⟩ over coarse cells
    pub defect: f64,
    /// ε Σ_faces (∇ρ)·(∇(u−U)·Ū + ∇P′(r)): what the ε-terms of the
    /// regularized system leave behind
    pub epsilon: f64,
}

impl RemainderTerms {
    pub fn total(&self) -> f64 {
        self.viscous
            + self.transport
            + self.pressure
            + self.potential_time
            + self.potential_flux
            + self.force
            + self.defect
            + self.epsilon
    }
}

/// Node weights of coarse cell boxes, matching [`defect_estimate`].
fn cell_average(d: &DiscreteDomain, values: &[f64], coarse_cells: usize) -> Vec<f64> {
    let s = d.cells() / coarse_cells;
    let t = |i: usize| if i == 0 || i == s { 0.5 } else { 1.0 };
    let mut out = Vec::with_capacity(coarse_cells.pow(3));
    for ci in 0..coarse_cells {
        for cj in 0..coarse_cells {
            for ck in 0..coarse_cells {
                let (mut acc, mut vol) = (0.0, 0.0);
                for a in 0..=s {
                    for b in 0..=s {
                        for c in 0..=s {
                            let w = t(a) * t(b) * t(c);
                            acc += w * values[d.index(ci * s + a, cj * s + b, ck * s + c)];
                            vol += w;
                        }
                    }
                }
                out.push(acc / vol);
            }
        }
    }
    out
}

/// Evaluate the remainder at one time level.
#[allow(clippy::too_many_arguments)]
pub fn remainder(
    rho: &ScalarField,
    u: &VectorField,
    pair: &PairSample,
    defect: Option<&DefectEstimate>,
    p: &ViscosityParams,
    law: &PressureLaw,
    f: &VectorField,
    eps: f64,
) -> Result<RemainderTerms> {
    check_grids(rho, u, pair)?;
    let d = *rho.domain();
    if !d.same_grid(f.domain()) {
        return Err(Error::Domain("force lives on a different grid".into()));
    }
    let rv = rho.values();
    let r = pair.r.values();
    let uu = pair.u;
    // gradU[j][k] = D_k U_j
    let grad_u: [[Vec<f64>; 3]; 3] = [0, 1, 2].map(|j| [0, 1, 2].map(|k| diff(&d, uu.comp(j), k)));
    let div_u = div(uu);
    let dpot: Vec<f64> = r.iter().map(|&x| law.dpot(x)).collect();
    let grad_dpot = [0, 1, 2].map(|k| diff(&d, &dpot, k));

    let viscous = viscous_pairing(u, uu, p);
    let transport = -weighted_sum(&d, |i| {
        let a = u.at(i);
        let b = uu.at(i);
        let dt = pair.du.at(i);
        let mut acc = 0.0;
        for j in 0..3 {
            let conv = a[0] * grad_u[j][0][i] + a[1] * grad_u[j][1][i] + a[2] * grad_u[j][2][i];
            acc += (a[j] - b[j]) * (dt[j] + conv);
        }
        rv[i] * acc
    });
    let pressure = -weighted_sum(&d, |i| law.p(rv[i]) * div_u.values()[i]);
    let potential_time = -weighted_sum(&d, |i| (rv[i] - r[i]) * law.ddpot(r[i]) * pair.dr.values()[i]);
    let potential_flux = -weighted_sum(&d, |i| {
        let a = u.at(i);
        rv[i] * (a[0] * grad_dpot[0][i] + a[1] * grad_dpot[1][i] + a[2] * grad_dpot[2][i])
    });
    let force = weighted_sum(&d, |i| {
        let a = u.at(i);
        let b = uu.at(i);
        let g = f.at(i);
        rv[i] * ((a[0] - b[0]) * g[0] + (a[1] - b[1]) * g[1] + (a[2] - b[2]) * g[2])
    });

    let defect = match defect {
        None => 0.0,
        Some(est) => {
            let avg: [[Vec<f64>; 3]; 3] =
                [0, 1, 2].map(|j| [0, 1, 2].map(|k| cell_average(&d, &grad_u[j][k], est.coarse_cells)));
            let mut acc = 0.0;
            for (c, cell) in est.cells.iter().enumerate() {
                for j in 0..3 {
                    for k in 0..3 {
                        acc += cell.volume * cell.reynolds[j][k] * avg[j][k][c];
                    }
                }
            }
            -acc
        }
    };

    let mut epsilon = 0.0;
    if eps != 0.0 {
        let h2 = d.spacing().powi(2);
        for axis in 0..3 {
            for_each_face(&d, axis, |lo, hi, fw| {
                let mut t = dpot[hi] - dpot[lo];
                for j in 0..3 {
                    let du_hi = u.comp(j)[hi] - uu.comp(j)[hi];
                    let du_lo = u.comp(j)[lo] - uu.comp(j)[lo];
                    t += (du_hi - du_lo) * 0.5 * (uu.comp(j)[hi] + uu.comp(j)[lo]);
                }
                epsilon += fw * (rv[hi] - rv[lo]) * t / h2;
            });
        }
        epsilon *= eps;
    }

    Ok(RemainderTerms { viscous, transport, pressure, potential_time, potential_flux, force, defect, epsilon })
}

/// How defects enter the audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefectPolicy {
    Zero,
    /// Jensen gaps on this many coarse cells per axis.
    Coarse(usize),
}

impl DefectPolicy {
    fn estimate(&self, rho: &ScalarField, u: &VectorField, law: &PressureLaw) -> Result<Option<DefectEstimate>> {
        match *self {
            DefectPolicy::Zero => Ok(None),
            DefectPolicy::Coarse(c) => Ok(Some(defect_estimate(rho, &u.mul_scalar(rho)?, c, law)?)),
        }
    }
}

pub const REL_ENTROPY_CSV_HEADER: &str = "step,time,rel_entropy,remainder,h,residual,envelope";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelEntropyRow {
    pub time: f64,
    pub rel_entropy: f64,
    pub remainder: f64,
    /// ‖∇U‖∞ + ‖∇²U‖₃² + ‖∇²U‖∞
    pub h: f64,
    pub residual: f64,
    pub envelope: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelEntropyReport {
    rows: Vec<RelEntropyRow>,
}

impl RelEntropyReport {
    pub fn from_rows(rows: Vec<RelEntropyRow>) -> Self {
        Self { rows }
    }
    pub fn rows(&self) -> &[RelEntropyRow] {
        &self.rows
    }
    pub fn len(&self) -> usize {
        self.rows.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
    pub fn residuals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.residual).collect()
    }
    pub fn max_positive_residual(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.residual))
    }
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{REL_ENTROPY_CSV_HEADER}").unwrap();
        for (k, r) in self.rows.iter().enumerate() {
            let env = r.envelope.map(|e| e.to_string()).unwrap_or_default();
            writeln!(s, "{k},{},{},{},{},{},{env}", r.time, r.rel_entropy, r.remainder, r.h, r.residual).unwrap();
        }
        s
    }
}

/// Pointwise Frobenius norms of ∇U and of the matrix of second differences
/// D_a D_b U_c.
fn derivative_norms(u: &VectorField) -> (Vec<f64>, Vec<f64>) {
    let d = *u.domain();
    let mut g = vec![0.0; d.len()];
    let mut hess = vec![0.0; d.len()];
    for c in 0..3 {
        for a in 0..3 {
            let first = diff(&d, u.comp(c), a);
            for (o, v) in g.iter_mut().zip(&first) {
                *o += v * v;
            }
            for b in 0..3 {
                for (o, v) in hess.iter_mut().zip(diff(&d, &first, b)) {
                    *o += v * v;
                }
            }
        }
    }
    g.iter_mut().for_each(|x| *x = x.sqrt());
    hess.iter_mut().for_each(|x| *x = x.sqrt());
    (g, hess)
}

/// h(t) = ‖∇U‖∞ + ‖∇²U‖₃² + ‖∇²U‖∞ from discrete differences.
pub fn gronwall_weight(u: &VectorField) -> f64 {
    let d = *u.domain();
    let (g, hess) = derivative_norms(u);
    lp_norm(&d, &g, f64::INFINITY) + lp_norm(&d, &hess, 3.0).powi(2) + lp_norm(&d, &hess, f64::INFINITY)
}

fn check_aligned(traj: &[f64], pair: &[f64]) -> Result<()> {
    if traj.len() != pair.len() {
        return Err(Error::Precondition(format!("trajectory has {} samples, test pair {}", traj.len(), pair.len())));
    }
    for (a, b) in traj.iter().zip(pair) {
        if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
            return Err(Error::Precondition(format!("trajectory time {a} is not aligned with test pair time {b}")));
        }
    }
    Ok(())
}

/// residual(τ) = [E_rel(τ) + ∫(dissipation + ε-term)] − [E_rel(0) + ∫ℛ], with
/// the integrals accumulated exactly as in [`crate::energy::budget_residual`].
pub fn rei_residual(
    traj: &Trajectory,
    pair: &TestPair,
    p: &ViscosityParams,
    law: &PressureLaw,
    f: &VectorField,
    policy: DefectPolicy,
) -> Result<RelEntropyReport> {
    check_aligned(traj.times(), pair.times())?;
    let energy = EnergyReport::from_trajectory(traj, f, p, law)?;
    let mut e_rel = Vec::with_capacity(traj.len());
    let mut rem = Vec::with_capacity(traj.len());
    let mut h = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let s = pair.sample(k);
        let est = policy.estimate(traj.rho(k), traj.u(k), law)?;
        e_rel.push(rel_entropy(traj.rho(k), traj.u(k), &s, est.as_ref(), law)?);
        rem.push(remainder(traj.rho(k), traj.u(k), &s, est.as_ref(), p, law, f, traj.eps())?.total());
        h.push(gronwall_weight(s.u));
    }
    let residual = rei_residual_series(energy.rows(), &e_rel, &rem);
    let rows = (0..traj.len())
        .map(|k| RelEntropyRow {
            time: traj.times()[k],
            rel_entropy: e_rel[k],
            remainder: rem[k],
            h: h[k],
            residual: residual[k],
            envelope: None,
        })
        .collect();
    Ok(RelEntropyReport { rows })
}

/// REI residual at every level from per-level E_rel and ℛ, with the
/// dissipation taken from the energy rows of the same trajectory.
pub fn rei_residual_series(rows: &[EnergyRow], e_rel: &[f64], rem: &[f64]) -> Vec<f64> {
    let times: Vec<f64> = rows.iter().map(|r| r.time).collect();
    (0..rows.len())
        .map(|k| {
            let lhs = e_rel[k] + accumulate(rows, 0, k, |r| r.dissipation() + r.eps_term);
            let rhs = e_rel[0] + trapezoid_sum(&times, rem, 0, k);
            lhs - rhs
        })
        .collect()
}

/// The algebraic rearrangement of the transport term,
/// ∫ρ(∂ₜU + u·∇U)·(U−u) = ∫ρ(∂ₜU + U·∇U)·(U−u) − ∫ρ(u−U)⊗(u−U):∇U,
/// evaluated with discrete gradients. Returns |left − right|.
pub fn rearrangement_residual(rho: &ScalarField, u: &VectorField, uu: &VectorField, du: &VectorField) -> Result<f64> {
    let d = *rho.domain();
    for g in [u.domain(), uu.domain(), du.domain()] {
        if !d.same_grid(g) {
            return Err(Error::Domain("fields live on different grids".into()));
        }
    }
    let rv = rho.values();
    let grad_u: [[Vec<f64>; 3]; 3] = [0, 1, 2].map(|j| [0, 1, 2].map(|k| diff(&d, uu.comp(j), k)));
    let left = weighted_sum(&d, |i| {
        let (a, b, t) = (u.at(i), uu.at(i), du.at(i));
        (0..3)
            .map(|j| {
                let conv: f64 = (0..3).map(|k| a[k] * grad_u[j][k][i]).sum();
                rv[i] * (t[j] + conv) * (b[j] - a[j])
            })
            .sum()
    });
    let right = weighted_sum(&d, |i| {
        let (a, b, t) = (u.at(i), uu.at(i), du.at(i));
        let mut acc = 0.0;
        for j in 0..3 {
            let conv: f64 = (0..3).map(|k| b[k] * grad_u[j][k][i]).sum();
            acc += rv[i] * (t[j] + conv) * (b[j] - a[j]);
            for k in 0..3 {
                acc -= rv[i] * (a[j] - b[j]) * (a[k] - b[k]) * grad_u[j][k][i];
            }
        }
        acc
    });
    Ok((left - right).abs())
}

/// Constants of the Gronwall envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallConstants {
    /// Discrete Sobolev constant of the coarse grid.
    pub sobolev: f64,
    pub beta: f64,
    pub rho_ref_min: f64,
    pub rho_ref_max: f64,
    pub rho_max: f64,
    /// max (ρ−r)²/E^r(ρ)
    pub quadratic: f64,
    /// max ρ/E^r(ρ) on ρ > 2r
    pub residual_mass: f64,
    /// |d(∇²U)| ≤ c_d |∇²U|
    pub c_d: f64,
    /// Coefficients of ‖∇U‖∞, ‖∇²U‖₃², ‖∇²U‖∞.
    pub terms: [f64; 3],
    /// C = max(terms)
    pub c: f64,
}

/// Left side and discrete majorant of one estimate of the weak-strong chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainEntry {
    pub value: f64,
    pub majorant: f64,
}

impl ChainEntry {
    pub fn holds(&self) -> bool {
        self.value.abs() <= self.majorant * (1.0 + 1e-12) + 1e-300
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallReport {
    pub report: RelEntropyReport,
    pub constants: GronwallConstants,
    /// Accumulated consistency slack per step.
    pub slack: Vec<f64>,
    /// ‖∇ρ̃‖ in L^{2γ/(γ−1)} per step, reported only.
    pub grad_rho_ref: Vec<f64>,
    /// [convective, pressure, viscous-density] estimates per step.
    pub chain: Vec<[ChainEntry; 3]>,
}

impl GronwallReport {
    /// Steps where E_rel exceeds the envelope.
    pub fn violations(&self) -> Vec<usize> {
        self.report
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.envelope.is_some_and(|e| r.rel_entropy > e * (1.0 + 1e-12) + 1e-300))
            .map(|(k, _)| k)
            .collect()
    }
    pub fn holds(&self) -> bool {
        self.violations().is_empty()
    }
    pub fn chain_holds(&self) -> bool {
        self.chain.iter().all(|c| c.iter().all(|e| e.holds()))
    }
    pub fn final_rel_entropy(&self) -> f64 {
        self.report.rows.last().map_or(0.0, |r| r.rel_entropy)
    }
}

/// Strong-form consistency defects (d_m, d_c) of the reference: d_c = ∂ₜρ̃ + div(ρ̃ũ) − εLρ̃ and
/// d_m = ∂ₜũ + ũ·∇ũ + (∇p(ρ̃) + ε∇ρ̃·∇ũ + εLρ̃ ũ − d(∇²ũ))/ρ̃.
fn consistency_defects(s: &PairSample, p: &ViscosityParams, law: &PressureLaw, eps: f64) -> (VectorField, ScalarField) {
    let d = *s.r.domain();
    let r = s.r.values();
    let lap = neumann_laplacian(s.r);
    let flux = div(&s.u.mul_scalar(s.r).expect("same domain"));
    let dc: Vec<f64> = (0..d.len()).map(|i| s.dr.values()[i] + flux.values()[i] - eps * lap.values()[i]).collect();
    let pv: Vec<f64> = r.iter().map(|&x| law.p(x)).collect();
    let visc = aniso_laplacian(s.u, p);
    let grad_r = [0, 1, 2].map(|k| diff(&d, r, k));
    let mut dm = VectorField::zeros(d);
    for j in 0..3 {
        let uj = s.u.comp(j);
        let grad_uj = [0, 1, 2].map(|k| diff(&d, uj, k));
        let gp = diff(&d, &pv, j);
        let out = dm.comp_mut(j);
        for i in 0..d.len() {
            let (a, b, c) = d.unindex(i);
            if d.is_boundary(a, b, c) {
                continue;
            }
            let u = s.u.at(i);
            let conv = u[0] * grad_uj[0][i] + u[1] * grad_uj[1][i] + u[2] * grad_uj[2][i];
            let epst = eps * (grad_r[0][i] * grad_uj[0][i] + grad_r[1][i] * grad_uj[1][i] + grad_r[2][i] * grad_uj[2][i])
                + eps * lap.values()[i] * uj[i];
            out[i] = s.du.comp(j)[i] + conv + (gp[i] + epst - visc.comp(j)[i]) / r[i];
        }
    }
    (dm, ScalarField::new(d, dc).expect("same domain"))
}

/// Treat `reference` as the strong solution and check
/// E_rel(τ) ≤ (E_rel(0) + slack(τ))·exp(C∫h) at every coarse step.
///
/// slack(τ) = ∫(|∫ρd_m·(ũ−u)| + |∫(ρ−ρ̃)P″(ρ̃)d_c|) + max_{t≤τ} residual⁺,
/// where d_m, d_c are the strong-form defects of the reference and residual is
/// the REI residual of the coarse run against the reference.
pub fn gronwall_audit(
    coarse: &Trajectory,
    reference: &Trajectory,
    p: &ViscosityParams,
    law: &PressureLaw,
) -> Result<GronwallReport> {
    let dc = *coarse.domain().ok_or_else(|| Error::Domain("empty coarse trajectory".into()))?;
    let dr = *reference.domain().ok_or_else(|| Error::Domain("empty reference trajectory".into()))?;
    if (dc.extent() - dr.extent()).abs() > 1e-12 * dc.extent() {
        return Err(Error::Precondition("coarse and reference runs cover different boxes".into()));
    }
    let mut indices = Vec::with_capacity(coarse.len());
    for &t in coarse.times() {
        let j = reference
            .times()
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or_else(|| Error::Precondition(format!("reference run has no sample at t = {t}")))?;
        indices.push(j);
    }
    let mut r_min = f64::INFINITY;
    let mut r_max = 0.0f64;
    for &j in &indices {
        r_min = r_min.min(reference.rho(j).min());
        r_max = r_max.max(reference.rho(j).max());
    }
    if r_min <= DENSITY_FLOOR * law.rho_inf() {
        return Err(Error::Precondition(format!("reference density reaches {r_min:e}, below the positivity floor")));
    }

    let g = law.gamma();
    let grad_exp = 2.0 * g / (g - 1.0);
    let mut h = Vec::with_capacity(indices.len());
    let mut grad_rho_ref = Vec::with_capacity(indices.len());
    for &j in &indices {
        h.push(gronwall_weight(reference.u(j)));
        let rho = reference.rho(j);
        let gr: Vec<f64> = {
            let parts = [0, 1, 2].map(|k| diff(&dr, rho.values(), k));
            (0..dr.len()).map(|i| (parts[0][i].powi(2) + parts[1][i].powi(2) + parts[2][i].powi(2)).sqrt()).collect()
        };
        grad_rho_ref.push(lp_norm(&dr, &gr, grad_exp));
    }

    let pair = TestPair::sampled(reference, &indices, &dc)?;
    let coarse_max = (0..coarse.len()).map(|k| coarse.rho(k).max()).fold(0.0f64, f64::max);
    let rho_max = coarse_max.max(2.0 * r_max) * 1.01;
    let quadratic = quadratic_sandwich(law, r_min, r_max, rho_max)?;
    let residual_mass = residual_mass_constant(law, r_min, r_max, rho_max)?;
    let sobolev = sobolev_constant(&dc);
    let beta = p.beta();
    let c_d = 2f64.sqrt() * p.mu() + p.delta() + 3f64.sqrt() * p.bulk().abs();
    let (_, d_hi) = law.compatibility_bounds();
    let terms = [
        d_hi + 2.0 + 3f64.sqrt() * (g - 1.0),
        sobolev * sobolev * c_d * c_d * quadratic / (4.0 * beta * r_min * r_min),
        (2.0 * residual_mass).sqrt() * c_d / r_min,
    ];
    let c = terms.iter().copied().fold(0.0, f64::max);
    let constants = GronwallConstants {
        sobolev,
        beta,
        rho_ref_min: r_min,
        rho_ref_max: r_max,
        rho_max,
        quadratic,
        residual_mass,
        c_d,
        terms,
        c,
    };

    let zero = VectorField::zeros(dc);
    let rei = rei_residual(coarse, &pair, p, law, &zero, DefectPolicy::Zero)?;
    let times = coarse.times();
    let mut q = Vec::with_capacity(coarse.len());
    let mut chain = Vec::with_capacity(coarse.len());
    for k in 0..coarse.len() {
        let s = pair.sample(k);
        let rho = coarse.rho(k);
        let (dm, dcon) = consistency_defects(&s, p, law, reference.eps());
        let rv = rho.values();
        let u = coarse.u(k);
        let qm = weighted_sum(&dc, |i| {
            let (v, a, b) = (dm.at(i), u.at(i), s.u.at(i));
            rv[i] * (v[0] * (b[0] - a[0]) + v[1] * (b[1] - a[1]) + v[2] * (b[2] - a[2]))
        });
        let r = s.r.values();
        let qc = weighted_sum(&dc, |i| (rv[i] - r[i]) * law.ddpot(r[i]) * dcon.values()[i]);
        q.push(qm.abs() + qc.abs());
        chain.push(estimate_chain(rho, coarse.u(k), &s, p, law, &constants)?);
    }

    let mut report = rei;
    let mut slack = Vec::with_capacity(coarse.len());
    let mut worst = 0.0f64;
    let e0 = report.rows[0].rel_entropy;
    let mut int_h = 0.0;
    for k in 0..coarse.len() {
        worst = worst.max(report.rows[k].residual);
        let sl = trapezoid_sum(times, &q, 0, k) + worst;
        if k > 0 {
            int_h += 0.5 * (times[k] - times[k - 1]) * (h[k] + h[k - 1]);
        }
        let row = &mut report.rows[k];
        row.h = h[k];
        row.envelope = Some((e0 + sl) * (c * int_h).exp());
        slack.push(sl);
    }
    Ok(GronwallReport { report, constants, slack, grad_rho_ref, chain })
}

/// The three groups of the weak-strong estimate chain at one step, on the
/// coarse grid: the convective term against ‖∇U‖∞∫ρ|u−U|², the pressure
/// term against √3(γ−1)‖∇U‖∞∫E^r, and the density-weighted viscous term
/// against D(u−U) + (c₂‖∇²U‖₃² + c₃‖∇²U‖∞)E_rel.
fn estimate_chain(
    rho: &ScalarField,
    u: &VectorField,
    s: &PairSample,
    p: &ViscosityParams,
    law: &PressureLaw,
    k: &GronwallConstants,
) -> Result<[ChainEntry; 3]> {
    let d = *rho.domain();
    let rv = rho.values();
    let r = s.r.values();
    let (gn, hn) = derivative_norms(s.u);
    let grad_inf = lp_norm(&d, &gn, f64::INFINITY);
    let grad_u: [[Vec<f64>; 3]; 3] = [0, 1, 2].map(|j| [0, 1, 2].map(|a| diff(&d, s.u.comp(j), a)));

    let conv = weighted_sum(&d, |i| {
        let (a, b) = (u.at(i), s.u.at(i));
        let w = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        let mut acc = 0.0;
        for j in 0..3 {
            for m in 0..3 {
                acc += w[j] * w[m] * grad_u[j][m][i];
            }
        }
        rv[i] * acc
    });
    let kin2 = weighted_sum(&d, |i| {
        let (a, b) = (u.at(i), s.u.at(i));
        rv[i] * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2))
    });
    let div_u = div(s.u);
    let pres = weighted_sum(&d, |i| {
        div_u.values()[i] * (law.p(rv[i]) - law.p(r[i]) - law.dp(r[i]) * (rv[i] - r[i]))
    });
    let internal = weighted_sum(&d, |i| law.rel(rv[i], r[i]));

    // d(∇²U) from the same second differences that define ‖∇²U‖
    let mut dterm = [vec![0.0; d.len()], vec![0.0; d.len()], vec![0.0; d.len()]];
    for j in 0..3 {
        for a in 0..3 {
            let second = diff(&d, &grad_u[j][a], a);
            let coef = if a == 2 { p.delta() } else { p.mu() };
            for (o, v) in dterm[j].iter_mut().zip(&second) {
                *o += coef * v;
            }
        }
        for m in 0..3 {
            let mixed = diff(&d, &grad_u[m][m], j);
            for (o, v) in dterm[j].iter_mut().zip(&mixed) {
                *o += p.bulk() * v;
            }
        }
    }
    let visc = weighted_sum(&d, |i| {
        let (a, b) = (u.at(i), s.u.at(i));
        let mut acc = 0.0;
        for j in 0..3 {
            acc += dterm[j][i] * (b[j] - a[j]);
        }
        (rv[i] - r[i]) / r[i] * acc
    });
    let diff_field = u.lin_comb(1.0, s.u, -1.0)?;
    let dissip = viscous_pairing(&diff_field, &diff_field, p);
    let e_rel = 0.5 * kin2 + internal;
    let visc_major = dissip
        + (k.terms[1] * lp_norm(&d, &hn, 3.0).powi(2) + k.terms[2] * lp_norm(&d, &hn, f64::INFINITY)) * e_rel;
    Ok([
        ChainEntry { value: conv, majorant: grad_inf * kin2 },
        ChainEntry { value: pres, majorant: 3f64.sqrt() * (law.gamma() - 1.0) * grad_inf * internal },
        ChainEntry { value: visc, majorant: visc_major },
    ])
}
