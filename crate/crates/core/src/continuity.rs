//! ε-regularized continuity equation ∂tρ + div(ρu) = εΔρ with Neumann data.
//!
//! One backward-Euler step solves (I + dt·(D·(ρu) − εL))ρ⁺ = ρ, with D the
//! summation-by-parts divergence of [`crate::grid::ops`] and L the Neumann
//! Laplacian. Both annihilate constants under the quadrature (D because u
//! vanishes on the boundary nodes), so mass is conserved up to the linear
//! solve residual.

use crate::error::{Error, Result};
use crate::grid::ops::{face_pairing, neumann_laplacian};
use crate::grid::{lp_norm, DiscreteDomain, ScalarField, VectorField};
use crate::linalg::bicgstab;

/// Relative residual the implicit solve is driven to.
pub const SOLVE_TOL: f64 = 1e-14;
/// Residual above which a step is reported as a solver failure.
pub const SOLVE_LIMIT: f64 = 1e-10;
const MAX_ITER: usize = 500;

/// The backward-Euler operator of one step, applied matrix-free.
struct StepOperator<'a> {
    d: DiscreteDomain,
    u: &'a VectorField,
    eps: f64,
    dt: f64,
}

impl StepOperator<'_> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let d = &self.d;
        let n = d.cells();
        let np = d.nodes_per_axis();
        let h = d.spacing();
        let h2 = h * h;
        for (idx, out) in y.iter_mut().enumerate() {
            let (i, j, k) = d.unindex(idx);
            let c = [i, j, k];
            let mut flux = 0.0;
            let mut lap = 0.0;
            for a in 0..3 {
                let s = d.stride(a);
                let ua = self.u.comp(a);
                flux += match c[a] {
                    0 => (x[idx + s] * ua[idx + s] - x[idx] * ua[idx]) / h,
                    e if e == n => (x[idx] * ua[idx] - x[idx - s] * ua[idx - s]) / h,
                    _ => (x[idx + s] * ua[idx + s] - x[idx - s] * ua[idx - s]) / (2.0 * h),
                };
                let mut line = 0.0;
                if c[a] > 0 {
                    line += x[idx - s] - x[idx];
                }
                if c[a] + 1 < np {
                    line += x[idx + s] - x[idx];
                }
                lap += line / d.trapezoid(c[a]);
            }
            *out = x[idx] + self.dt * (flux - self.eps * lap / h2);
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let d = &self.d;
        let np = d.nodes_per_axis();
        let h2 = d.spacing().powi(2);
        (0..d.len())
            .map(|idx| {
                let (i, j, k) = d.unindex(idx);
                let mut s = 0.0;
                for c in [i, j, k] {
                    let nb = (c > 0) as u32 + (c + 1 < np) as u32;
                    s += nb as f64 / d.trapezoid(c);
                }
                1.0 + self.dt * self.eps * s / h2
            })
            .collect()
    }
}

/// One implicit step of the regularized continuity equation.
pub fn step_density(rho: &ScalarField, u: &VectorField, eps: f64, dt: f64) -> Result<ScalarField> {
    let d = *rho.domain();
    if !d.same_grid(u.domain()) {
        return Err(Error::Domain("density and velocity live on different grids".into()));
    }
    if !(eps > 0.0 && dt > 0.0 && eps.is_finite() && dt.is_finite()) {
        return Err(Error::Domain(format!("need eps > 0 and dt > 0, got eps={eps}, dt={dt}")));
    }
    if !(rho.min() > 0.0) {
        return Err(Error::Domain(format!("density must be positive, min is {}", rho.min())));
    }
    if !u.vanishes_on_boundary() {
        return Err(Error::Domain("velocity does not vanish on the boundary".into()));
    }
    let op = StepOperator { d, u, eps, dt };
    let diag = op.diagonal();
    let mut x = rho.values().to_vec();
    let out = bicgstab(|a, b| op.apply(a, b), &diag, rho.values(), &mut x, SOLVE_TOL, MAX_ITER);
    if !(out.rel_residual <= SOLVE_LIMIT) {
        return Err(Error::Solver {
            message: format!("continuity solve stalled after {} iterations", out.iterations),
            residuals: vec![out.rel_residual],
        });
    }
    let next = ScalarField::new(d, x)?;
    let min = next.min();
    if !(min > 0.0) {
        return Err(Error::Stability(format!(
            "density lost positivity (min {min:e}) at dt = {dt}; reduce the time step"
        )));
    }
    Ok(next)
}

/// A density trajectory driven by a prescribed sequence of velocities.
#[derive(Debug, Clone)]
pub struct ContinuitySolve {
    eps: f64,
    dt: f64,
    densities: Vec<ScalarField>,
    velocities: Vec<VectorField>,
}

impl ContinuitySolve {
    pub fn new(eps: f64, dt: f64, rho0: ScalarField) -> Result<Self> {
        if !(eps > 0.0 && dt > 0.0) {
            return Err(Error::Domain(format!("need eps > 0 and dt > 0, got eps={eps}, dt={dt}")));
        }
        if !(rho0.min() > 0.0) {
            return Err(Error::Domain("initial density must be positive".into()));
        }
        Ok(Self { eps, dt, densities: vec![rho0], velocities: Vec::new() })
    }

    /// Advance by one step with velocity `u` held over the step.
    pub fn step(&mut self, u: &VectorField) -> Result<&ScalarField> {
        let next = step_density(self.last(), u, self.eps, self.dt)?;
        self.velocities.push(u.clone());
        self.densities.push(next);
        Ok(self.last())
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn steps(&self) -> usize {
        self.velocities.len()
    }
    pub fn densities(&self) -> &[ScalarField] {
        &self.densities
    }
    pub fn velocities(&self) -> &[VectorField] {
        &self.velocities
    }
    pub fn last(&self) -> &ScalarField {
        self.densities.last().expect("trajectory starts with the initial density")
    }
}

/// max|v| + max|∇v| with the Frobenius norm of the SBP gradient.
pub fn w1inf_norm(v: &VectorField) -> f64 {
    let d = v.domain();
    let mut sup = 0.0f64;
    let mut grad = 0.0f64;
    let diffs: Vec<[Vec<f64>; 3]> =
        (0..3).map(|c| [0, 1, 2].map(|a| crate::grid::ops::diff(d, v.comp(c), a))).collect();
    for idx in 0..d.len() {
        let val = v.at(idx);
        sup = sup.max((val[0] * val[0] + val[1] * val[1] + val[2] * val[2]).sqrt());
        let mut f = 0.0;
        for row in &diffs {
            for col in row {
                f += col[idx] * col[idx];
            }
        }
        grad = grad.max(f.sqrt());
    }
    sup + grad
}

/// max_k ‖ρ₁ᵏ − ρ₂ᵏ‖₂ / max_{j<k} ‖u₁ʲ − u₂ʲ‖_{W^{1,∞}}, with 0/0 read as 0.
pub fn stability_estimate(run1: &ContinuitySolve, run2: &ContinuitySolve) -> Result<f64> {
    if run1.eps.to_bits() != run2.eps.to_bits() || run1.dt.to_bits() != run2.dt.to_bits() {
        return Err(Error::Domain("runs differ in eps or dt".into()));
    }
    if run1.steps() != run2.steps() {
        return Err(Error::Domain("runs have different lengths".into()));
    }
    if run1.densities[0] != run2.densities[0] {
        return Err(Error::Domain("runs start from different densities".into()));
    }
    let d = *run1.densities[0].domain();
    let mut vel = 0.0f64;
    let mut ratio = 0.0f64;
    for k in 1..=run1.steps() {
        let dv = run1.velocities[k - 1].lin_comb(1.0, &run2.velocities[k - 1], -1.0)?;
        vel = vel.max(w1inf_norm(&dv));
        let dr = run1.densities[k].zip_map(&run2.densities[k], |a, b| a - b)?;
        let num = lp_norm(&d, dr.values(), 2.0);
        if num == 0.0 {
            continue;
        }
        if vel == 0.0 {
            return Ok(f64::INFINITY);
        }
        ratio = ratio.max(num / vel);
    }
    Ok(ratio)
}

/// ‖∇ρ‖₂² from face differences.
pub fn grad_sq(rho: &ScalarField) -> f64 {
    let d = rho.domain();
    (0..3).map(|a| face_pairing(d, rho.values(), rho.values(), a)).sum()
}

/// ε·max_k ‖∇ρᵏ‖₂².
pub fn grad_density_budget(run: &ContinuitySolve) -> f64 {
    run.eps * run.densities.iter().map(grad_sq).fold(0.0, f64::max)
}

/// Clamp to [lo, hi], then apply `passes` sweeps of the mass-preserving
/// 7-point average ρ ← ρ + (h²/12)·Lρ.
pub fn mollify(rho: &ScalarField, lo: f64, hi: f64, passes: usize) -> Result<ScalarField> {
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::Domain(format!("clamp bounds must satisfy 0 < lo ≤ hi, got [{lo}, {hi}]")));
    }
    let mut out = rho.map(|v| v.clamp(lo, hi));
    let c = out.domain().spacing().powi(2) / 12.0;
    for _ in 0..passes {
        let lap = neumann_laplacian(&out);
        out = out.zip_map(&lap, |a, l| a + c * l)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;
    use crate::grid::ops::div;

    fn bump(d: DiscreteDomain) -> ScalarField {
        ScalarField::from_fn(d, |y| 1.0 + 0.5 * (-(y[0] * y[0] + 2.0 * y[1] * y[1] + y[2] * y[2]) * 4.0).exp())
    }

    fn swirl(d: DiscreteDomain) -> VectorField {
        VectorField::from_fn_no_slip(d, |y| {
            let b = (1.0 - y[0] * y[0]) * (1.0 - y[1] * y[1]) * (1.0 - y[2] * y[2]);
            [b * (1.0 + y[1]), b * (0.5 - y[2]), b * y[0]]
        })
    }

    #[test]
    fn constant_density_at_rest_is_fixed() {
        let d = DiscreteDomain::new(1.0, 8).unwrap();
        let r = ScalarField::constant(d, 2.5);
        let next = step_density(&r, &VectorField::zeros(d), 0.1, 0.01).unwrap();
        assert!(next.values().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn mass_is_conserved_with_flow() {
        let d = DiscreteDomain::new(1.0, 10).unwrap();
        let u = swirl(d);
        let mut run = ContinuitySolve::new(0.05, 0.01, bump(d)).unwrap();
        let m0 = integrate(run.last());
        for _ in 0..20 {
            run.step(&u).unwrap();
        }
        assert!((integrate(run.last()) - m0).abs() <= 1e-12 * m0);
    }

    #[test]
    fn heat_step_obeys_max_principle() {
        let d = DiscreteDomain::new(1.0, 8).unwrap();
        let r0 = bump(d);
        let next = step_density(&r0, &VectorField::zeros(d), 0.3, 0.05).unwrap();
        assert!(next.min() >= r0.min() && next.max() <= r0.max());
    }

    #[test]
    fn exponential_bounds() {
        let d = DiscreteDomain::new(1.0, 10).unwrap();
        let u = swirl(d).scale(0.5);
        let dmax = lp_norm(&d, div(&u).values(), f64::INFINITY);
        let dt = 0.01;
        let r0 = bump(d);
        let mut run = ContinuitySolve::new(0.05, dt, r0.clone()).unwrap();
        for k in 1..=30 {
            let r = run.step(&u).unwrap();
            let g = (k as f64 * dt * dmax).exp();
            assert!(r.max() <= r0.max() * g * (1.0 + 10.0 * dt));
            assert!(r.min() >= r0.min() / g * (1.0 - 10.0 * dt));
        }
    }

    #[test]
    fn identical_runs_have_zero_stability_ratio() {
        let d = DiscreteDomain::new(1.0, 6).unwrap();
        let u = swirl(d);
        let mut a = ContinuitySolve::new(0.1, 0.01, bump(d)).unwrap();
        let mut b = a.clone();
        for _ in 0..3 {
            a.step(&u).unwrap();
            b.step(&u).unwrap();
        }
        assert_eq!(stability_estimate(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn mollify_keeps_mass_and_bounds() {
        let d = DiscreteDomain::new(1.0, 8).unwrap();
        let raw = ScalarField::from_fn(d, |y| if y[0] > 0.1 { 3.0 } else { 0.2 });
        let m = mollify(&raw, 0.5, 2.0, 4).unwrap();
        let clamped = raw.map(|v| v.clamp(0.5, 2.0));
        assert!((integrate(&m) - integrate(&clamped)).abs() < 1e-12);
        assert!(m.min() >= 0.5 && m.max() <= 2.0);
        assert_eq!(grad_sq(&ScalarField::constant(d, 4.0)), 0.0);
    }
}
