//! Anisotropic viscosity coefficients: admissibility, the strong-ellipticity
//! constant β and the dissipation quadratic form f(B).

use crate::error::{finite, Error, Result};

/// Validated viscosity triple (μ, δ, λ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityParams {
    mu: f64,
    delta: f64,
    lambda: f64,
    beta: f64,
}

/// Lower admissible bound for λ given (μ, δ).
pub fn lambda_threshold(mu: f64, delta: f64) -> f64 {
    -mu * (mu + 3.0 * delta) / (mu + 2.0 * delta)
}

pub fn admissible(mu: f64, delta: f64, lambda: f64) -> Result<bool> {
    finite("mu", mu)?;
    finite("delta", delta)?;
    finite("lambda", lambda)?;
    Ok(mu >= delta && delta > 0.0 && lambda > lambda_threshold(mu, delta))
}

/// The two non-trivial eigenvalues (η₈, η₉) of the half-Hessian of f.
///
/// η₈ is evaluated as det/η₉ so that it stays accurate near the
/// admissibility boundary where the closed form cancels.
pub fn eta_pair(mu: f64, delta: f64, lambda: f64) -> (f64, f64) {
    if mu == delta {
        // the square root is 3|μ+λ| and the pair is {μ, 4μ+3λ} exactly
        let other = 4.0 * mu + 3.0 * lambda;
        return (mu.min(other), mu.max(other));
    }
    let tr = 4.0 * mu + delta + 3.0 * lambda;
    let disc = 12.0 * mu * mu + delta * delta + 9.0 * lambda * lambda - 4.0 * mu * delta
        + 20.0 * mu * lambda
        - 2.0 * lambda * delta;
    let s = disc.max(0.0).sqrt();
    let eta9 = 0.5 * (tr + s);
    let det = mu * (mu + 3.0 * delta) + lambda * (mu + 2.0 * delta);
    let eta8 = if eta9 > 0.0 { det / eta9 } else { 0.5 * (tr - s) };
    (eta8, eta9)
}

/// β = min{δ, η₈} without any admissibility check.
pub fn beta_unchecked(mu: f64, delta: f64, lambda: f64) -> f64 {
    delta.min(eta_pair(mu, delta, lambda).0)
}

/// V(β) from the ellipticity argument; nonincreasing on (0, δ].
pub fn v_function(mu: f64, delta: f64, lambda: f64, beta: f64) -> f64 {
    (mu - beta) * (delta - beta) / (mu + 2.0 * delta - 3.0 * beta) + mu + lambda
}

impl ViscosityParams {
    pub fn new(mu: f64, delta: f64, lambda: f64) -> Result<Self> {
        if !admissible(mu, delta, lambda)? {
            return Err(Error::Domain(format!(
                "inadmissible viscosity (mu={mu}, delta={delta}, lambda={lambda}): need mu >= delta > 0 and lambda > {}",
                lambda_threshold(mu, delta)
            )));
        }
        let beta = beta_unchecked(mu, delta, lambda);
        debug_assert!(beta > 0.0);
        Ok(Self { mu, delta, lambda, beta })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    /// μ + λ, the coefficient of the grad-div term.
    pub fn bulk(&self) -> f64 {
        self.mu + self.lambda
    }
}

pub fn ellipticity_constant(p: &ViscosityParams) -> f64 {
    p.beta
}

/// Checked variant taking raw coefficients.
pub fn ellipticity_constant_raw(mu: f64, delta: f64, lambda: f64) -> Result<f64> {
    Ok(ViscosityParams::new(mu, delta, lambda)?.beta)
}

/// f(B) = μ Σⱼ(b_{j1}² + b_{j2}²) + δ Σⱼ b_{j3}² + (μ+λ)(tr B)², with B[j][l] = b_{jl}.
pub fn quadratic_form(p: &ViscosityParams, b: &[[f64; 3]; 3]) -> f64 {
    let mut horiz = 0.0;
    let mut vert = 0.0;
    for row in b {
        horiz += row[0] * row[0] + row[1] * row[1];
        vert += row[2] * row[2];
    }
    let tr = b[0][0] + b[1][1] + b[2][2];
    p.mu * horiz + p.delta * vert + p.bulk() * tr * tr
}

/// Eigenvalues of ½H_f in ascending order.
pub fn hessian_spectrum(p: &ViscosityParams) -> [f64; 9] {
    let (e8, e9) = eta_pair(p.mu, p.delta, p.lambda);
    let mut s = [p.mu, p.mu, p.mu, p.mu, p.mu, p.delta, p.delta, e8, e9];
    s.sort_by(|a, b| a.total_cmp(b));
    s
}
