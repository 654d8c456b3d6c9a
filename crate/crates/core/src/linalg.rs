//! Small dense-vector kernels and a Jacobi-preconditioned BiCGSTAB.

/// Dot product with eight fixed-order partial sums (vectorizes, stays deterministic).
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct KrylovOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Solve A x = b starting from `x`, stopping at ‖b − Ax‖ ≤ tol·‖b‖.
pub(crate) fn bicgstab(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> KrylovOutcome {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovOutcome { iterations: 0, rel_residual: 0.0 };
    }
    let inv: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let r0 = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut ph = vec![0.0; n];
    let mut sh = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut rel = norm(&r) / bnorm;
    for it in 0..max_iter {
        if rel <= tol {
            return KrylovOutcome { iterations: it, rel_residual: rel };
        }
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            ph[i] = inv[i] * p[i];
        }
        apply(&ph, &mut v);
        let denom = dot(&r0, &v);
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * ph[i];
            }
            // recompute the true residual
            apply(x, &mut t);
            let res: Vec<f64> = b.iter().zip(&t).map(|(a, c)| a - c).collect();
            rel = norm(&res) / bnorm;
            if rel <= tol {
                return KrylovOutcome { iterations: it + 1, rel_residual: rel };
            }
            r = res;
            continue;
        }
        for i in 0..n {
            sh[i] = inv[i] * s[i];
        }
        apply(&sh, &mut t);
        let tt = dot(&t, &t);
        omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm(&r) / bnorm;
    }
    // final true residual
    apply(x, &mut t);
    let res: Vec<f64> = b.iter().zip(&t).map(|(a, c)| a - c).collect();
    let rel = norm(&res) / bnorm;
    KrylovOutcome { iterations: max_iter, rel_residual: rel }
}
