//! Isentropic pressure law p(ρ) = ρ^γ, its potential and relative energies,
//! and numerically certified sandwich constants between E^r and powers of |ρ − r|.

use crate::error::{finite, Error, Result};
use crate::grid::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureLaw {
    gamma: f64,
    rho_inf: f64,
}

/// Constants of the essential/residual two-sided bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sandwich {
    pub c1: f64,
    pub big_c1: f64,
    pub c2: f64,
    pub big_c2: f64,
}

const SANDWICH_POINTS: usize = 10_000;

impl PressureLaw {
    pub fn new(gamma: f64, rho_inf: f64) -> Result<Self> {
        finite("gamma", gamma)?;
        finite("rho_inf", rho_inf)?;
        if gamma <= 1.0 {
            return Err(Error::Domain(format!("gamma must exceed 1, got {gamma}")));
        }
        if rho_inf <= 0.0 {
            return Err(Error::Domain(format!("rho_inf must be positive, got {rho_inf}")));
        }
        Ok(Self { gamma, rho_inf })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn rho_inf(&self) -> f64 {
        self.rho_inf
    }

    pub fn pressure(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(self.p(rho))
    }

    pub fn potential(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(self.pot(rho))
    }

    pub fn rel_energy(&self, rho: f64, r: f64) -> Result<f64> {
        check_density(rho)?;
        finite("r", r)?;
        if r <= 0.0 {
            return Err(Error::Domain(format!("reference density must be positive, got {r}")));
        }
        Ok(self.rel(rho, r))
    }

    #[inline]
    pub fn p(&self, rho: f64) -> f64 {
        rho.powf(self.gamma)
    }
    #[inline]
    pub fn dp(&self, rho: f64) -> f64 {
        self.gamma * rho.powf(self.gamma - 1.0)
    }
    #[inline]
    pub fn pot(&self, rho: f64) -> f64 {
        rho.powf(self.gamma) / (self.gamma - 1.0)
    }
    /// P′(ρ) = γρ^{γ−1}/(γ−1).
    #[inline]
    pub fn dpot(&self, rho: f64) -> f64 {
        self.gamma * rho.powf(self.gamma - 1.0) / (self.gamma - 1.0)
    }
    /// P″(ρ) = γρ^{γ−2}.
    #[inline]
    pub fn ddpot(&self, rho: f64) -> f64 {
        self.gamma * rho.powf(self.gamma - 2.0)
    }

    /// E^r(ρ) = (ρ^γ + (γ−1)r^γ − γρr^{γ−1})/(γ−1), evaluated as
    /// r^γ φ(ρ/r)/(γ−1) with a series for φ near 1.
    #[inline]
    pub fn rel(&self, rho: f64, r: f64) -> f64 {
        let g = self.gamma;
        let t = rho / r - 1.0;
        let phi = if t.abs() < 1e-3 {
            let mut term = g * (g - 1.0) * 0.5 * t * t;
            let mut sum = term;
            for k in 3..9 {
                term *= (g - (k as f64 - 1.0)) * t / k as f64;
                sum += term;
            }
            sum
        } else {
            (g * t.ln_1p()).exp_m1() - g * t
        };
        r.powf(g) * phi.max(0.0) / (g - 1.0)
    }

    /// E^ρ∞(ρ).
    #[inline]
    pub fn rel_inf(&self, rho: f64) -> f64 {
        self.rel(rho, self.rho_inf)
    }

    /// Membership of ρ in the open essential interval (ρ∞/2, 2ρ∞).
    #[inline]
    pub fn is_essential(&self, rho: f64) -> bool {
        rho > 0.5 * self.rho_inf && rho < 2.0 * self.rho_inf
    }

    /// Lower and upper compatibility constants d̲, d̄ = min/max{1, 3(γ−1)}.
    pub fn compatibility_bounds(&self) -> (f64, f64) {
        let t = 3.0 * (self.gamma - 1.0);
        (t.min(1.0), t.max(1.0))
    }

    /// lim_{s→ρ∞} E^ρ∞(s)/(s−ρ∞)².
    pub fn quadratic_limit(&self) -> f64 {
        0.5 * self.gamma * self.rho_inf.powf(self.gamma - 2.0)
    }

    /// lim_{s→∞} E^ρ∞(s)/(s−ρ∞)^γ.
    pub fn power_limit(&self) -> f64 {
        1.0 / (self.gamma - 1.0)
    }
}

fn check_density(rho: f64) -> Result<()> {
    finite("rho", rho)?;
    if rho < 0.0 {
        return Err(Error::Domain(format!("density must be nonnegative, got {rho}")));
    }
    Ok(())
}

/// Indicator fields of the essential and residual sets of ρ.
pub fn ess_res_split(law: &PressureLaw, rho: &ScalarField) -> (ScalarField, ScalarField) {
    let ess = rho.map(|v| if law.is_essential(v) { 1.0 } else { 0.0 });
    let res = ess.map(|e| 1.0 - e);
    (ess, res)
}

/// Min/max of |ρ−ρ∞|²/E^ρ∞ over the essential set and of |ρ−ρ∞|^γ/E^ρ∞ over
/// the residual set within [0, rho_max], on a uniform grid of 10⁴ points.
pub fn sandwich_constants(law: &PressureLaw, rho_max: f64) -> Result<Sandwich> {
    finite("rho_max", rho_max)?;
    let ri = law.rho_inf;
    if rho_max <= 2.0 * ri {
        return Err(Error::Domain(format!("rho_max must exceed 2 rho_inf = {}", 2.0 * ri)));
    }
    let g = law.gamma;
    let (mut c1, mut big_c1) = (f64::INFINITY, 0.0f64);
    let (mut c2, mut big_c2) = (f64::INFINITY, 0.0f64);
    for k in 0..=SANDWICH_POINTS {
        let rho = rho_max * k as f64 / SANDWICH_POINTS as f64;
        let d = (rho - ri).abs();
        if law.is_essential(rho) {
            let ratio = if d < 1e-12 * ri { 1.0 / law.quadratic_limit() } else { d * d / law.rel_inf(rho) };
            c1 = c1.min(ratio);
            big_c1 = big_c1.max(ratio);
        } else {
            let ratio = d.powf(g) / law.rel_inf(rho);
            c2 = c2.min(ratio);
            big_c2 = big_c2.max(ratio);
        }
    }
    Ok(Sandwich { c1, big_c1, c2, big_c2 })
}

fn check_ws_range(rt_min: f64, rt_max: f64, rho_max: f64) -> Result<()> {
    finite("rtilde_min", rt_min)?;
    finite("rtilde_max", rt_max)?;
    finite("rho_max", rho_max)?;
    if !(rt_min > 0.0 && rt_min <= rt_max && rho_max > 2.0 * rt_max) {
        return Err(Error::Domain(format!(
            "need 0 < rtilde_min <= rtilde_max and rho_max > 2 rtilde_max, got ({rt_min}, {rt_max}, {rho_max})"
        )));
    }
    Ok(())
}

fn reference_grid(rt_min: f64, rt_max: f64) -> Vec<f64> {
    const NR: usize = 64;
    if rt_max == rt_min {
        return vec![rt_min];
    }
    (0..=NR).map(|k| rt_min + (rt_max - rt_min) * k as f64 / NR as f64).collect()
}

/// One constant C with 1 ≤ C E^r(ρ) for ρ < r/2, (ρ−r)² ≤ C E^r(ρ) for
/// r/2 ≤ ρ ≤ 2r and ρ^γ ≤ C E^r(ρ) for 2r < ρ ≤ rho_max, for every
/// r ∈ [rtilde_min, rtilde_max].
pub fn ws_sandwich(law: &PressureLaw, rt_min: f64, rt_max: f64, rho_max: f64) -> Result<f64> {
    check_ws_range(rt_min, rt_max, rho_max)?;
    const NP: usize = 2000;
    let g = law.gamma;
    let mut c = 0.0f64;
    for r in reference_grid(rt_min, rt_max) {
        // 1/E^r is increasing on [0, r/2); the supremum sits at r/2.
        for k in 0..=NP {
            let rho = 0.5 * r * k as f64 / NP as f64;
            c = c.max(1.0 / law.rel(rho, r));
        }
        for k in 0..=NP {
            let rho = 0.5 * r + 1.5 * r * k as f64 / NP as f64;
            let d = rho - r;
            let ratio = if d.abs() < 1e-12 * r {
                2.0 / (g * r.powf(g - 2.0))
            } else {
                d * d / law.rel(rho, r)
            };
            c = c.max(ratio);
        }
        for k in 0..=NP {
            let rho = 2.0 * r + (rho_max - 2.0 * r) * k as f64 / NP as f64;
            c = c.max(rho.powf(g) / law.rel(rho, r));
        }
    }
    Ok(c)
}

/// max (ρ−r)²/E^r(ρ) over ρ ∈ [0, rho_max] and r ∈ [rtilde_min, rtilde_max].
pub fn quadratic_sandwich(law: &PressureLaw, rt_min: f64, rt_max: f64, rho_max: f64) -> Result<f64> {
    check_ws_range(rt_min, rt_max, rho_max)?;
    const NP: usize = 4000;
    let g = law.gamma;
    let mut c = 0.0f64;
    for r in reference_grid(rt_min, rt_max) {
        for k in 0..=NP {
            let rho = rho_max * k as f64 / NP as f64;
            let d = rho - r;
            let ratio = if d.abs() < 1e-12 * r { 2.0 / (g * r.powf(g - 2.0)) } else { d * d / law.rel(rho, r) };
            c = c.max(ratio);
        }
    }
    Ok(c)
}

/// max ρ/E^r(ρ) over 2r < ρ ≤ rho_max and r ∈ [rtilde_min, rtilde_max].
pub fn residual_mass_constant(law: &PressureLaw, rt_min: f64, rt_max: f64, rho_max: f64) -> Result<f64> {
    check_ws_range(rt_min, rt_max, rho_max)?;
    const NP: usize = 2000;
    let mut c = 0.0f64;
    for r in reference_grid(rt_min, rt_max) {
        for k in 0..=NP {
            let rho = 2.0 * r + (rho_max - 2.0 * r) * k as f64 / NP as f64;
            c = c.max(rho / law.rel(rho, r));
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(g: f64, ri: f64) -> PressureLaw {
        PressureLaw::new(g, ri).unwrap()
    }

    #[test]
    fn pressure_and_potential_examples() {
        let l2 = law(2.0, 1.0);
        assert_eq!(l2.pressure(3.0).unwrap(), 9.0);
        assert_eq!(l2.potential(3.0).unwrap(), 9.0);
        assert_eq!(law(1.7, 1.0).pressure(0.0).unwrap(), 0.0);
        assert_eq!(law(1.7, 1.0).potential(0.0).unwrap(), 0.0);
        let l14 = law(1.4, 1.0);
        let p = l14.pressure(2.0).unwrap();
        assert!((p - (1.4 * 2f64.ln()).exp()).abs() < 1e-14);
        assert!((p - 2.639_015_821_545_788_5).abs() < 1e-12);
        assert!((l14.potential(2.0).unwrap() - p / 0.4).abs() < 1e-13);
        assert!(l2.pressure(-1.0).is_err());
    }

    #[test]
    fn rel_energy_examples() {
        let l = law(2.0, 1.0);
        assert!((l.rel_energy(3.0, 1.0).unwrap() - 4.0).abs() < 1e-14);
        assert_eq!(l.rel_energy(1.0, 1.0).unwrap(), 0.0);
        assert!((l.rel_energy(0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(l.rel_energy(1.0, 0.0).is_err());
        assert_eq!(law(1.3, 2.0).rel_energy(2.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn stable_branch_matches_direct_formula() {
        for &g in &[1.2, 1.4, 2.0, 3.0] {
            let l = law(g, 1.0);
            for &t in &[-0.9e-3, -1e-4, 3e-4, 0.99e-3] {
                let rho: f64 = 1.0 + t;
                let direct = (rho.powf(g) + (g - 1.0) - g * rho) / (g - 1.0);
                let stable = l.rel(rho, 1.0);
                // the direct form loses ~ε absolutely to cancellation
                assert!((direct - stable).abs() <= 1e-14, "g={g} t={t}");
                assert!(stable > 0.0);
            }
        }
    }

    #[test]
    fn split_is_open_interval() {
        let l = law(2.0, 1.0);
        assert!(l.is_essential(1.5));
        assert!(!l.is_essential(2.0));
        assert!(!l.is_essential(0.5));
        assert!(!l.is_essential(0.0));
    }

    #[test]
    fn sandwich_quadratic_case() {
        let s = sandwich_constants(&law(2.0, 1.0), 5.0).unwrap();
        assert!((s.c1 - 1.0).abs() < 1e-12 && (s.big_c1 - 1.0).abs() < 1e-12);
        assert!(sandwich_constants(&law(2.0, 1.0), 2.0).is_err());
    }

    #[test]
    fn ws_sandwich_quadratic_case() {
        let c = ws_sandwich(&law(2.0, 1.0), 1.0, 1.0, 50.0).unwrap();
        assert!((c - 4.0).abs() < 1e-9, "{c}");
        assert!(ws_sandwich(&law(2.0, 1.0), 1.0, 0.5, 50.0).is_err());
        assert!(ws_sandwich(&law(2.0, 1.0), 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn compatibility_bounds() {
        assert_eq!(law(2.0, 1.0).compatibility_bounds(), (1.0, 3.0));
        let (lo, hi) = law(1.2, 1.0).compatibility_bounds();
        assert!((lo - 0.6).abs() < 1e-15 && hi == 1.0);
    }
}
