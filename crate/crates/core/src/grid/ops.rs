//! Summation-by-parts difference operators on the vertex grid.
//!
//! `diff` is the second-order central difference in the interior closed by
//! first-order one-sided differences on the end nodes. With the trapezoidal
//! weights W it satisfies ⟨Dq, v⟩ + ⟨q, Dv⟩ = boundary terms, which vanish as
//! soon as either factor is zero on the boundary nodes. Second-order forms
//! (Laplacians, Dirichlet energies) are built from compact face differences.

use super::{weighted_sum, DiscreteDomain, ScalarField, VectorField};
use crate::visc::ViscosityParams;

#[inline]
fn axis_index(d: &DiscreteDomain, idx: usize, axis: usize) -> usize {
    let (i, j, k) = d.unindex(idx);
    [i, j, k][axis]
}

/// D along `axis`.
pub fn diff(d: &DiscreteDomain, v: &[f64], axis: usize) -> Vec<f64> {
    let s = d.stride(axis);
    let n = d.cells();
    let h = d.spacing();
    (0..d.len())
        .map(|idx| match axis_index(d, idx, axis) {
            0 => (v[idx + s] - v[idx]) / h,
            a if a == n => (v[idx] - v[idx - s]) / h,
            _ => (v[idx + s] - v[idx - s]) / (2.0 * h),
        })
        .collect()
}

/// Dᵀ along `axis` (plain matrix transpose, no weights).
pub fn diff_t(d: &DiscreteDomain, y: &[f64], axis: usize) -> Vec<f64> {
    let s = d.stride(axis);
    let n = d.cells();
    let h = d.spacing();
    let mut out = vec![0.0; d.len()];
    for idx in 0..d.len() {
        let yv = y[idx];
        match axis_index(d, idx, axis) {
            0 => {
                out[idx] -= yv / h;
                out[idx + s] += yv / h;
            }
            a if a == n => {
                out[idx] += yv / h;
                out[idx - s] -= yv / h;
            }
            _ => {
                out[idx + s] += yv / (2.0 * h);
                out[idx - s] -= yv / (2.0 * h);
            }
        }
    }
    out
}

pub fn grad(q: &ScalarField) -> VectorField {
    let d = q.domain();
    VectorField::new(*d, [0, 1, 2].map(|a| diff(d, q.values(), a))).expect("same domain")
}

pub fn div(v: &VectorField) -> ScalarField {
    let d = v.domain();
    let mut out = diff(d, v.comp(0), 0);
    for a in 1..3 {
        for (o, x) in out.iter_mut().zip(diff(d, v.comp(a), a)) {
            *o += x;
        }
    }
    ScalarField::new(*d, out).expect("same domain")
}

/// Visit every face normal to `axis`: (lower node, upper node, face weight).
pub fn for_each_face(d: &DiscreteDomain, axis: usize, mut f: impl FnMut(usize, usize, f64)) {
    let np = d.nodes_per_axis();
    let s = d.stride(axis);
    let h3 = d.spacing().powi(3);
    for idx in 0..d.len() {
        let (i, j, k) = d.unindex(idx);
        let c = [i, j, k];
        if c[axis] + 1 >= np {
            continue;
        }
        let mut w = h3;
        for (b, &cb) in c.iter().enumerate() {
            if b != axis {
                w *= d.trapezoid(cb);
            }
        }
        f(idx, idx + s, w);
    }
}

/// Σ_faces w·((a⁺−a⁻)/h)·((b⁺−b⁻)/h) over faces normal to `axis`.
pub fn face_pairing(d: &DiscreteDomain, a: &[f64], b: &[f64], axis: usize) -> f64 {
    let h2 = d.spacing().powi(2);
    let mut acc = 0.0;
    for_each_face(d, axis, |lo, hi, w| acc += w * (a[hi] - a[lo]) * (b[hi] - b[lo]) / h2);
    acc
}

/// Neumann Laplacian L with Σ w·q·Lρ = −Σ_faces w ∇q·∇ρ.
pub fn neumann_laplacian(rho: &ScalarField) -> ScalarField {
    let d = rho.domain();
    let v = rho.values();
    let np = d.nodes_per_axis();
    let h2 = d.spacing().powi(2);
    let mut out = vec![0.0; d.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let (i, j, k) = d.unindex(idx);
        let mut acc = 0.0;
        for (a, &c) in [i, j, k].iter().enumerate() {
            let s = d.stride(a);
            let mut line = 0.0;
            if c > 0 {
                line += v[idx - s] - v[idx];
            }
            if c + 1 < np {
                line += v[idx + s] - v[idx];
            }
            acc += line / d.trapezoid(c);
        }
        *o = acc / h2;
    }
    ScalarField::new(*d, out).expect("same domain")
}

/// Dirichlet integrals of a velocity field: (Σ|∇ₓu|², Σ|∂_z u|², Σ(div u)²).
pub fn dirichlet_parts(u: &VectorField) -> [f64; 3] {
    let d = u.domain();
    let mut horiz = 0.0;
    let mut vert = 0.0;
    for c in 0..3 {
        horiz += face_pairing(d, u.comp(c), u.comp(c), 0) + face_pairing(d, u.comp(c), u.comp(c), 1);
        vert += face_pairing(d, u.comp(c), u.comp(c), 2);
    }
    let dv = div(u);
    let divdiv = weighted_sum(d, |i| dv.values()[i] * dv.values()[i]);
    [horiz, vert, divdiv]
}

/// Discrete viscous bilinear form a_h(u, v); a_h(u, u) is the total dissipation rate.
pub fn viscous_pairing(u: &VectorField, v: &VectorField, p: &ViscosityParams) -> f64 {
    let d = u.domain();
    let mut horiz = 0.0;
    let mut vert = 0.0;
    for c in 0..3 {
        horiz += face_pairing(d, u.comp(c), v.comp(c), 0) + face_pairing(d, u.comp(c), v.comp(c), 1);
        vert += face_pairing(d, u.comp(c), v.comp(c), 2);
    }
    let du = div(u);
    let dv = div(v);
    let dd = weighted_sum(d, |i| du.values()[i] * dv.values()[i]);
    p.mu() * horiz + p.delta() * vert + p.bulk() * dd
}

/// Discrete μΔₓu + δ∂_zz u + (μ+λ)∇div u, i.e. −A_h u, on interior nodes
/// (zero on the boundary nodes).
pub fn aniso_laplacian(u: &VectorField, p: &ViscosityParams) -> VectorField {
    let d = *u.domain();
    let n = d.cells();
    let h2 = d.spacing().powi(2);
    let h3 = d.spacing().powi(3);
    let w = d.weights();
    let dv = div(u);
    let wdiv: Vec<f64> = dv.values().iter().zip(&w).map(|(a, b)| a * b).collect();
    let mut out = VectorField::zeros(d);
    for c in 0..3 {
        let grad_div = diff_t(&d, &wdiv, c);
        let uc = u.comp(c);
        let oc = out.comp_mut(c);
        for idx in 0..d.len() {
            let (i, j, k) = d.unindex(idx);
            if i == 0 || j == 0 || k == 0 || i == n || j == n || k == n {
                continue;
            }
            let mut lap = 0.0;
            for a in 0..3 {
                let s = d.stride(a);
                let coef = if a == 2 { p.delta() } else { p.mu() };
                lap += coef * (uc[idx + s] + uc[idx - s] - 2.0 * uc[idx]) / h2;
            }
            oc[idx] = lap - p.bulk() * grad_div[idx] / h3;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{inner, inner_vec};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scalar(d: DiscreteDomain, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField::new(d, (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_vector(d: DiscreteDomain, rng: &mut ChaCha8Rng) -> VectorField {
        let mut v = VectorField::new(d, [0, 1, 2].map(|_| (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()))
            .unwrap();
        v.enforce_no_slip();
        v
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let d = DiscreteDomain::new(1.5, 8).unwrap();
        let g = grad(&ScalarField::constant(d, 3.0));
        assert!((0..3).all(|c| g.comp(c).iter().all(|&x| x == 0.0)));
        let g = grad(&ScalarField::from_fn(d, |y| y[0]));
        for idx in 0..d.len() {
            assert!((g.comp(0)[idx] - 1.0).abs() < 1e-13);
            assert!(g.comp(1)[idx].abs() < 1e-13 && g.comp(2)[idx].abs() < 1e-13);
        }
    }

    #[test]
    fn summation_by_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = DiscreteDomain::new(1.0, 9).unwrap();
        for _ in 0..5 {
            let q = random_scalar(d, &mut rng);
            let v = random_vector(d, &mut rng);
            let lhs = inner_vec(&grad(&q), &v).unwrap();
            let rhs = -inner(&q, &div(&v)).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn transpose_is_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = DiscreteDomain::new(1.0, 5).unwrap();
        for axis in 0..3 {
            let a = random_scalar(d, &mut rng);
            let b = random_scalar(d, &mut rng);
            let da = diff(&d, a.values(), axis);
            let dtb = diff_t(&d, b.values(), axis);
            let l: f64 = da.iter().zip(b.values()).map(|(x, y)| x * y).sum();
            let r: f64 = a.values().iter().zip(&dtb).map(|(x, y)| x * y).sum();
            assert!((l - r).abs() < 1e-10);
        }
    }

    #[test]
    fn neumann_laplacian_is_symmetric_and_conservative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = DiscreteDomain::new(1.0, 6).unwrap();
        let a = random_scalar(d, &mut rng);
        let b = random_scalar(d, &mut rng);
        let la = neumann_laplacian(&a);
        let lb = neumann_laplacian(&b);
        let s1 = inner(&la, &b).unwrap();
        let s2 = inner(&a, &lb).unwrap();
        assert!((s1 - s2).abs() < 1e-10);
        let faces: f64 = (0..3).map(|ax| face_pairing(&d, a.values(), b.values(), ax)).sum();
        assert!((s1 + faces).abs() < 1e-10);
        assert!(super::super::integrate(&la).abs() < 1e-10);
    }

    #[test]
    fn laplacian_pairing_matches_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = DiscreteDomain::new(1.0, 7).unwrap();
        let p = ViscosityParams::new(1.3, 0.6, -0.5).unwrap();
        let u = random_vector(d, &mut rng);
        let v = random_vector(d, &mut rng);
        let l = -inner_vec(&aniso_laplacian(&u, &p), &v).unwrap();
        let r = viscous_pairing(&u, &v, &p);
        assert!((l - r).abs() < 1e-9 * r.abs().max(1.0));
    }
}
