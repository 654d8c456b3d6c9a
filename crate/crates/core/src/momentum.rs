//! Galerkin momentum equation in the span Xₙ of the lowest Lamé eigenmodes.
//!
//! Every term of the weak form is written as a nodal load vector G, and its
//! component along φᵢ is the quadrature Σ w G·φᵢ. The terms are discretized so
//! that testing with u itself reproduces the discrete energy balance:
//!
//! * convection Σ w Fₖ ūⱼ,ₖ Dₖφⱼ with F = ρu and ū the two-point average along
//!   axis k, so that ū·Du = ½D|u|² and the term cancels against the transport
//!   of kinetic energy by the continuity flux;
//! * pressure −Σ w ρφ·D(P′(ρ)), the adjoint of the continuity flux;
//! * the ε term on faces, matching the Neumann Laplacian of the continuity step.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::continuity::step_density;
use crate::error::{Error, Result};
use crate::grid::ops::{diff, diff_t, for_each_face};
use crate::grid::{
    assemble_lame, eigenbasis_with, inner_vec, DiscreteDomain, EigenOptions, GalerkinBasis, LameOperator,
    ScalarField, VectorField,
};
use crate::linalg::dot;
use crate::thermo::PressureLaw;
use crate::visc::ViscosityParams;

/// The Lamé operator together with its lowest eigenmodes.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    op: LameOperator,
    basis: GalerkinBasis,
    packed: Vec<Vec<f64>>,
    stiffness: DMatrix<f64>,
}

impl GalerkinSystem {
    pub fn new(op: LameOperator, basis: GalerkinBasis) -> Result<Self> {
        if !op.domain().same_grid(basis.domain()) {
            return Err(Error::Domain("basis and operator live on different grids".into()));
        }
        let packed: Vec<Vec<f64>> = basis.modes().iter().map(|m| op.pack(m)).collect();
        let h3 = op.domain().spacing().powi(3);
        let n = packed.len();
        let applied: Vec<Vec<f64>> = packed.iter().map(|x| op.apply(x)).collect();
        let mut stiffness = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = 0.5 * h3 * (dot(&packed[i], &applied[j]) + dot(&packed[j], &applied[i]));
                stiffness[(i, j)] = v;
                stiffness[(j, i)] = v;
            }
        }
        Ok(Self { op, basis, packed, stiffness })
    }

    /// Assemble the operator and compute its lowest `n` eigenpairs.
    pub fn build(domain: &DiscreteDomain, params: &ViscosityParams, n: usize) -> Result<Self> {
        Self::build_with(domain, params, n, &EigenOptions::default())
    }

    pub fn build_with(domain: &DiscreteDomain, params: &ViscosityParams, n: usize, opts: &EigenOptions) -> Result<Self> {
        let op = assemble_lame(domain, params);
        let basis = eigenbasis_with(&op, n, opts)?;
        Self::new(op, basis)
    }

    pub fn operator(&self) -> &LameOperator {
        &self.op
    }
    pub fn basis(&self) -> &GalerkinBasis {
        &self.basis
    }
    pub fn domain(&self) -> &DiscreteDomain {
        self.op.domain()
    }
    pub fn params(&self) -> &ViscosityParams {
        self.op.params()
    }
    pub fn n(&self) -> usize {
        self.basis.n()
    }
    /// Kᵢⱼ = a_h(φⱼ, φᵢ); diagonal up to the eigensolver residual.
    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn velocity(&self, coeffs: &[f64]) -> VectorField {
        self.basis.reconstruct(coeffs)
    }

    /// (Σ w G·φᵢ)ᵢ for a nodal load G; boundary values of G do not contribute.
    pub fn project_load(&self, g: &VectorField) -> Vec<f64> {
        let gp = self.op.pack(g);
        self.project_packed(&gp)
    }

    fn project_packed(&self, gp: &[f64]) -> Vec<f64> {
        let h3 = self.domain().spacing().powi(3);
        self.packed.iter().map(|p| h3 * dot(p, gp)).collect()
    }
}

/// Mᵢⱼ = Σ w ρ φᵢ·φⱼ.
pub fn mass_matrix(rho: &ScalarField, basis: &GalerkinBasis) -> Result<DMatrix<f64>> {
    if !rho.domain().same_grid(basis.domain()) {
        return Err(Error::Domain("density and basis live on different grids".into()));
    }
    if !(rho.min() > 0.0) {
        return Err(Error::Domain(format!("mass matrix needs a positive density, min is {}", rho.min())));
    }
    let n = basis.n();
    let weighted: Vec<VectorField> =
        basis.modes().iter().map(|m| m.mul_scalar(rho).expect("same domain")).collect();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = 0.5
                * (inner_vec(&weighted[i], basis.mode(j)).expect("same domain")
                    + inner_vec(&weighted[j], basis.mode(i)).expect("same domain"));
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// The weak-form terms of N[ρ, u] tested against each φᵢ.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsTerms {
    pub convection: Vec<f64>,
    pub pressure: Vec<f64>,
    pub viscous: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub force: Vec<f64>,
}

impl RhsTerms {
    pub fn total(&self) -> Vec<f64> {
        (0..self.convection.len())
            .map(|i| self.convection[i] + self.pressure[i] + self.viscous[i] + self.epsilon[i] + self.force[i])
            .collect()
    }
}

/// Nodal loads of every term except the viscous one.
fn inviscid_loads(rho: &ScalarField, u: &VectorField, f: &VectorField, law: &PressureLaw, eps: f64) -> [VectorField; 4] {
    let d = *rho.domain();
    let n = d.cells();
    let h = d.spacing();
    let h2 = h * h;
    let h3 = h2 * h;
    let r = rho.values();

    // convection: Σₖ Dₖᵀ(w Fₖ ūⱼ,ₖ)/h³, as the load against φⱼ
    let w = d.weights();
    let mut conv = VectorField::zeros(d);
    for k in 0..3 {
        let s = d.stride(k);
        let uk = u.comp(k);
        for j in 0..3 {
            let uj = u.comp(j);
            let mut y = vec![0.0; d.len()];
            for idx in 0..d.len() {
                let (a, b, c) = d.unindex(idx);
                let ck = [a, b, c][k];
                if ck == 0 || ck == n {
                    continue;
                }
                let fk = r[idx] * uk[idx];
                if fk != 0.0 {
                    y[idx] = w[idx] * fk * 0.5 * (uj[idx + s] + uj[idx - s]);
                }
            }
            let t = diff_t(&d, &y, k);
            for (o, v) in conv.comp_mut(j).iter_mut().zip(t) {
                *o += v / h3;
            }
        }
    }

    // pressure: −ρ D(P′(ρ))
    let dpot: Vec<f64> = r.iter().map(|&x| law.dpot(x)).collect();
    let mut pres = VectorField::zeros(d);
    for a in 0..3 {
        let g = diff(&d, &dpot, a);
        for ((o, gv), rv) in pres.comp_mut(a).iter_mut().zip(g).zip(r) {
            *o = -rv * gv;
        }
    }

    // ε term: −ε Σ_faces fw (Δρ/h)(Δuⱼ/h)·½(φⱼ(lo) + φⱼ(hi))
    let mut epsl = VectorField::zeros(d);
    if eps != 0.0 {
        for axis in 0..3 {
            let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
            for_each_face(&d, axis, |lo, hi, fw| pairs.push((lo, hi, fw)));
            for j in 0..3 {
                let uj = u.comp(j).to_vec();
                let out = epsl.comp_mut(j);
                for &(lo, hi, fw) in &pairs {
                    let v = -eps * fw * (r[hi] - r[lo]) * (uj[hi] - uj[lo]) / h2 * 0.5 / h3;
                    out[lo] += v;
                    out[hi] += v;
                }
            }
        }
    }

    let force = f.mul_scalar(rho).expect("same domain");
    [conv, pres, epsl, force]
}

/// Evaluate every term of N[ρ, u] against the basis.
pub fn rhs_terms(
    rho: &ScalarField,
    u: &VectorField,
    f: &VectorField,
    law: &PressureLaw,
    eps: f64,
    sys: &GalerkinSystem,
) -> Result<RhsTerms> {
    let d = sys.domain();
    if !d.same_grid(rho.domain()) || !d.same_grid(u.domain()) || !d.same_grid(f.domain()) {
        return Err(Error::Domain("fields and basis live on different grids".into()));
    }
    let [conv, pres, epsl, force] = inviscid_loads(rho, u, f, law, eps);
    let up = sys.op.pack(u);
    let au: Vec<f64> = sys.op.apply(&up).iter().map(|v| -v).collect();
    Ok(RhsTerms {
        convection: sys.project_load(&conv),
        pressure: sys.project_load(&pres),
        viscous: sys.project_packed(&au),
        epsilon: sys.project_load(&epsl),
        force: sys.project_load(&force),
    })
}

/// ⟨N[ρ, u], φᵢ⟩ for every mode.
pub fn rhs_functional(
    rho: &ScalarField,
    u: &VectorField,
    f: &VectorField,
    law: &PressureLaw,
    eps: f64,
    sys: &GalerkinSystem,
) -> Result<Vec<f64>> {
    Ok(rhs_terms(rho, u, f, law, eps, sys)?.total())
}

/// Coordinates of u in Xₙ.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    pub coeffs: Vec<f64>,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub rho: ScalarField,
    pub u: GalerkinState,
    pub time: f64,
}

impl FlowState {
    pub fn new(rho: ScalarField, u: GalerkinState) -> Result<Self> {
        if !(rho.min() > 0.0) {
            return Err(Error::Domain("flow state needs a positive density".into()));
        }
        let time = u.time;
        Ok(Self { rho, u, time })
    }

    /// ρ ≡ ρ∞, u = 0 at time 0.
    pub fn rest(domain: DiscreteDomain, law: &PressureLaw, n: usize) -> Self {
        Self {
            rho: ScalarField::constant(domain, law.rho_inf()),
            u: GalerkinState { coeffs: vec![0.0; n], time: 0.0 },
            time: 0.0,
        }
    }

    pub fn velocity(&self, sys: &GalerkinSystem) -> VectorField {
        sys.velocity(&self.u.coeffs)
    }
}

/// Time-step and fixed-point parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub eps: f64,
    pub dt: f64,
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl StepConfig {
    pub fn new(eps: f64, dt: f64) -> Self {
        Self { eps, dt, theta: 0.7, tol: 1e-9, max_iter: 200 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Domain(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Domain(format!("picard_theta must lie in (0, 1], got {}", self.theta)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Domain("picard_tol and picard_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub picard_iterations: usize,
    pub picard_residual: f64,
}

/// One coupled step: density first with the old velocity, then the momentum
/// fixed point M[ρ⁺]c⁺ = M[ρ]c + dt·N[ρ⁺, u⁺] by damped Picard iteration.
///
/// The viscous part of N is linear in c, so it is moved to the left-hand side;
/// the fixed point is unchanged.
pub fn advance(
    state: &FlowState,
    f: &VectorField,
    sys: &GalerkinSystem,
    law: &PressureLaw,
    cfg: &StepConfig,
) -> Result<(FlowState, StepInfo)> {
    cfg.validate()?;
    let n = sys.n();
    if state.u.coeffs.len() != n {
        return Err(Error::Domain(format!("state has {} coefficients, basis has {n}", state.u.coeffs.len())));
    }
    let u_old = sys.velocity(&state.u.coeffs);
    let rho_new = step_density(&state.rho, &u_old, cfg.eps, cfg.dt)?;
    let m_old = mass_matrix(&state.rho, sys.basis())?;
    let m_new = mass_matrix(&rho_new, sys.basis())?;
    let c_old = DVector::from_column_slice(&state.u.coeffs);
    let base = &m_old * &c_old;
    let lhs = &m_new + cfg.dt * sys.stiffness();
    let chol = Cholesky::new(lhs).ok_or_else(|| Error::Domain("momentum system is not positive definite".into()))?;

    let mut c = c_old.clone();
    let mut change = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        let u = sys.velocity(c.as_slice());
        let loads = inviscid_loads(&rho_new, &u, f, law, cfg.eps);
        let mut rhs = base.clone();
        for g in &loads {
            for (r, v) in rhs.iter_mut().zip(sys.project_load(g)) {
                *r += cfg.dt * v;
            }
        }
        let solved = chol.solve(&rhs);
        let next = c.scale(1.0 - cfg.theta) + solved.scale(cfg.theta);
        let diff = (&next - &c).norm();
        let scale = next.norm().max(c.norm());
        change = if scale == 0.0 { 0.0 } else { diff / scale };
        c = next;
        if !change.is_finite() {
            break;
        }
        if change <= cfg.tol {
            let time = state.time + cfg.dt;
            let out = FlowState { rho: rho_new, u: GalerkinState { coeffs: c.as_slice().to_vec(), time }, time };
            return Ok((out, StepInfo { picard_iterations: it, picard_residual: change }));
        }
    }
    Err(Error::Iteration { iterations: cfg.max_iter, residual: change })
}

/// Nodal density and velocity at every time level of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    eps: f64,
    times: Vec<f64>,
    rho: Vec<ScalarField>,
    u: Vec<VectorField>,
}

impl Trajectory {
    pub fn new(eps: f64) -> Self {
        Self { eps, times: Vec::new(), rho: Vec::new(), u: Vec::new() }
    }

    pub fn push(&mut self, time: f64, rho: ScalarField, u: VectorField) -> Result<()> {
        if !rho.domain().same_grid(u.domain()) {
            return Err(Error::Domain("density and velocity live on different grids".into()));
        }
        if let Some(first) = self.rho.first() {
            if !first.domain().same_grid(rho.domain()) {
                return Err(Error::Domain("trajectory samples live on different grids".into()));
            }
        }
        if let Some(&last) = self.times.last() {
            if !(time > last) {
                return Err(Error::Domain(format!("sample time {time} does not follow {last}")));
            }
        }
        self.times.push(time);
        self.rho.push(rho);
        self.u.push(u);
        Ok(())
    }

    pub fn eps(&self) -> f64 {
        self.eps
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
    pub fn rho(&self, k: usize) -> &ScalarField {
        &self.rho[k]
    }
    pub fn u(&self, k: usize) -> &VectorField {
        &self.u[k]
    }
    pub fn domain(&self) -> Option<&DiscreteDomain> {
        self.rho.first().map(|r| r.domain())
    }
}

/// Run `steps` coupled steps from `initial`, keeping every level.
pub fn simulate(
    initial: &FlowState,
    f: &VectorField,
    sys: &GalerkinSystem,
    law: &PressureLaw,
    cfg: &StepConfig,
    steps: usize,
) -> Result<(Trajectory, Vec<StepInfo>)> {
    let mut traj = Trajectory::new(cfg.eps);
    traj.push(initial.time, initial.rho.clone(), initial.velocity(sys))?;
    let mut infos = Vec::with_capacity(steps);
    let mut state = initial.clone();
    for _ in 0..steps {
        let (next, info) = advance(&state, f, sys, law, cfg)?;
        traj.push(next.time, next.rho.clone(), next.velocity(sys))?;
        infos.push(info);
        state = next;
    }
    Ok((traj, infos))
}

/// Weighted projection: M[ρ₀]c = (⟨m₀, φᵢ⟩)ᵢ.
pub fn initial_velocity_projection(m0: &VectorField, rho0: &ScalarField, basis: &GalerkinBasis) -> Result<GalerkinState> {
    let m = mass_matrix(rho0, basis)?;
    let j0 = DVector::from_vec(basis.project(m0));
    let chol = Cholesky::new(m).ok_or_else(|| Error::Domain("singular mass matrix".into()))?;
    Ok(GalerkinState { coeffs: chol.solve(&j0).as_slice().to_vec(), time: 0.0 })
}
