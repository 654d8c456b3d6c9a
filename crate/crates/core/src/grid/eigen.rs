//! Lowest eigenpairs of the discrete Lamé operator by block LOBPCG.
//!
//! The preconditioner is the exact inverse of the componentwise operator
//! μ(K_x + K_y) + δK_z (plus the bulk term along the component's own axis),
//! applied through the tensor sine transform. Converged columns are soft
//! locked: they stay in the Ritz basis but stop contributing search directions.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{inner_vec, DiscreteDomain, LameOperator, TensorDirichletSolver, VectorField};
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Residual bound every returned eigenpair satisfies: ‖Aφ − λφ‖ ≤ bound·λ.
pub const RESIDUAL_BOUND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Extra block columns beyond n; `None` picks max(6, n/3).
    pub guard: Option<usize>,
    /// Target relative residual.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { guard: None, tol: 1e-10, max_iter: 600, seed: 0x5eed }
    }
}

/// Lowest n eigenpairs, modes orthonormal in discrete L².
#[derive(Debug, Clone)]
pub struct GalerkinBasis {
    domain: DiscreteDomain,
    eigenvalues: Vec<f64>,
    modes: Vec<VectorField>,
    residuals: Vec<f64>,
    next: Option<f64>,
    iterations: usize,
}

impl GalerkinBasis {
    pub fn n(&self) -> usize {
        self.modes.len()
    }
    pub fn domain(&self) -> &DiscreteDomain {
        &self.domain
    }
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.eigenvalues[i]
    }
    pub fn mode(&self, i: usize) -> &VectorField {
        &self.modes[i]
    }
    pub fn modes(&self) -> &[VectorField] {
        &self.modes
    }
    /// Relative residuals ‖Aφᵢ − λᵢφᵢ‖/λᵢ.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }
    /// Ritz estimate of λ_{n+1} from the guard block.
    pub fn next_eigenvalue(&self) -> Option<f64> {
        self.next
    }
    /// Relative gap (λ_{n+1} − λ_n)/λ_n; near zero means n splits a cluster.
    pub fn cluster_gap(&self) -> Option<f64> {
        let last = *self.eigenvalues.last()?;
        self.next.map(|nx| (nx - last) / last)
    }
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn gram_deviation(&self) -> f64 {
        let mut dev = 0.0f64;
        for i in 0..self.n() {
            for j in 0..=i {
                let g = inner_vec(&self.modes[i], &self.modes[j]).expect("same domain");
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((g - target).abs());
            }
        }
        dev
    }

    /// Σ cᵢφᵢ.
    pub fn reconstruct(&self, coeffs: &[f64]) -> VectorField {
        let mut out = VectorField::zeros(self.domain);
        for (c, phi) in coeffs.iter().zip(&self.modes) {
            for a in 0..3 {
                for (o, p) in out.comp_mut(a).iter_mut().zip(phi.comp(a)) {
                    *o += c * p;
                }
            }
        }
        out
    }

    /// (⟨v, φᵢ⟩)ᵢ.
    pub fn project(&self, v: &VectorField) -> Vec<f64> {
        self.modes.iter().map(|phi| inner_vec(v, phi).expect("same domain")).collect()
    }
}

pub fn eigenbasis(op: &LameOperator, n: usize) -> Result<GalerkinBasis> {
    eigenbasis_with(op, n, &EigenOptions::default())
}

pub fn eigenbasis_with(op: &LameOperator, n: usize, opts: &EigenOptions) -> Result<GalerkinBasis> {
    let dim = op.dim();
    if n == 0 || 2 * n > dim {
        return Err(Error::Domain(format!("mode count must lie in 1..={}, got {n}", dim / 2)));
    }
    let k = (n + opts.guard.unwrap_or((n / 3).max(6))).min(dim / 2).max(n);
    let d = *op.domain();
    let pre = Preconditioner::new(op);
    let mut x = initial_block(&pre, k, opts.seed);
    orthonormalize(&mut x, 0);
    if x.len() < k {
        return Err(Error::Solver { message: "degenerate start block".into(), residuals: vec![] });
    }
    let mut ax = apply_all(op, &x);

    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut lambda = vec![0.0f64; k];
    let mut res: Vec<f64> = vec![f64::INFINITY; k];
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        if it > 0 && it % RESTART == 0 {
            ax = apply_all(op, &x);
        }
        let mut s = x.clone();
        let mut a_s = ax.clone();
        if it > 0 {
            let active: Vec<usize> =
                (0..k).filter(|&i| i >= n || !(res[i] <= opts.tol * lambda[i].abs())).collect();
            let w: Vec<Vec<f64>> = active
                .par_iter()
                .map(|&i| {
                    let r: Vec<f64> = ax[i].iter().zip(&x[i]).map(|(a, b)| a - lambda[i] * b).collect();
                    pre.apply(&r)
                })
                .collect();
            s.extend(w);
            s.append(&mut p);
            orthonormalize(&mut s, k);
            a_s.extend(apply_all(op, &s[k..]));
        }
        let m = s.len();
        let rows: Vec<Vec<f64>> = (0..m).into_par_iter().map(|i| (0..=i).map(|j| dot(&s[i], &a_s[j])).collect()).collect();
        let mut g = DMatrix::<f64>::zeros(m, m);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(g);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let cols: Vec<usize> = order[..k].to_vec();

        let new_x: Vec<Vec<f64>> = cols.par_iter().map(|&c| combine(&s, &eig.eigenvectors, c, 0)).collect();
        let new_ax: Vec<Vec<f64>> = cols.par_iter().map(|&c| combine(&a_s, &eig.eigenvectors, c, 0)).collect();
        for (i, &c) in cols.iter().enumerate() {
            lambda[i] = eig.eigenvalues[c];
        }
        res = (0..k)
            .map(|i| {
                let r: f64 =
                    new_ax[i].iter().zip(&new_x[i]).map(|(a, b)| (a - lambda[i] * b).powi(2)).sum::<f64>();
                r.sqrt()
            })
            .collect();
        // P: the part of the new block spanned by the non-X directions.
        p = if m > k {
            let next_active: Vec<usize> =
                (0..k).filter(|&i| i >= n || !(res[i] <= opts.tol * lambda[i].abs())).collect();
            next_active.par_iter().map(|&i| combine(&s, &eig.eigenvectors, cols[i], k)).collect()
        } else {
            Vec::new()
        };
        x = new_x;
        ax = new_ax;
        if (0..n).all(|i| res[i] <= opts.tol * lambda[i].abs()) {
            break;
        }
    }

    let x_n: Vec<Vec<f64>> = x[..n].to_vec();
    let ax = apply_all(op, &x_n);
    let mut rel = Vec::with_capacity(n);
    for i in 0..n {
        let lam = dot(&x_n[i], &ax[i]);
        let r: f64 = ax[i].iter().zip(&x_n[i]).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
        lambda[i] = lam;
        rel.push(r / lam.abs());
    }
    if rel.iter().any(|r| !(*r <= RESIDUAL_BOUND)) || lambda[..n].iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Solver {
            message: format!("LOBPCG stopped after {iterations} iterations without reaching the residual bound"),
            residuals: rel,
        });
    }
    let scale = d.spacing().powf(-1.5);
    let modes = x_n
        .iter()
        .map(|v| {
            let scaled: Vec<f64> = v.iter().map(|a| a * scale).collect();
            op.unpack(&scaled)
        })
        .collect();
    let next = if k > n { Some(lambda[n]) } else { None };
    Ok(GalerkinBasis { domain: d, eigenvalues: lambda[..n].to_vec(), modes, residuals: rel, next, iterations })
}

struct Preconditioner {
    solver: TensorDirichletSolver,
    coef: [[f64; 3]; 3],
    block: usize,
}

impl Preconditioner {
    fn new(op: &LameOperator) -> Self {
        let p = op.params();
        let base = [p.mu(), p.mu(), p.delta()];
        let coef = [0, 1, 2].map(|c| {
            let mut k = base;
            k[c] += p.bulk().max(0.0);
            k
        });
        let solver = TensorDirichletSolver::new(op.domain());
        let block = solver.size();
        Self { solver, coef, block }
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(r.len());
        for c in 0..3 {
            out.extend(self.solver.solve(self.coef[c], &r[c * self.block..(c + 1) * self.block]));
        }
        out
    }
}

/// Lowest tensor sine modes of the componentwise operators, slightly perturbed
/// so that no symmetry class is missing from the start block.
fn initial_block(pre: &Preconditioner, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut cand: Vec<(f64, usize, [usize; 3])> = Vec::new();
    for c in 0..3 {
        for (idx, e) in pre.solver.lowest_modes(pre.coef[c], k) {
            cand.push((e, c, idx));
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = pre.block;
    cand.iter()
        .take(k)
        .map(|&(_, c, idx)| {
            let mut v: Vec<f64> = (0..3 * b).map(|_| 1e-3 * rng.gen_range(-1.0..1.0) / (b as f64).sqrt()).collect();
            for (dst, s) in v[c * b..(c + 1) * b].iter_mut().zip(pre.solver.mode(idx)) {
                *dst += s;
            }
            v
        })
        .collect()
}

fn apply_all(op: &LameOperator, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    v.par_iter().map(|x| op.apply(x)).collect()
}

/// Σ_r basis[r]·C[r, col] over rows r ≥ from.
fn combine(basis: &[Vec<f64>], c: &DMatrix<f64>, col: usize, from: usize) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, os)| {
        let off = ci * CHUNK;
        for (r, b) in basis.iter().enumerate().skip(from) {
            let w = c[(r, col)];
            for (o, x) in os.iter_mut().zip(&b[off..]) {
                *o += w * x;
            }
        }
    });
    out
}

const CHUNK: usize = 4096;
const RESTART: usize = 16;

/// Two-pass classical Gram–Schmidt of the columns after the first `fixed`,
/// which are taken as already orthonormal. Numerically dependent columns are
/// dropped.
fn orthonormalize(v: &mut Vec<Vec<f64>>, fixed: usize) {
    let cols = v.split_off(fixed);
    for mut x in cols {
        let before = dot(&x, &x).sqrt();
        if before == 0.0 {
            continue;
        }
        for _ in 0..2 {
            let coeffs: Vec<f64> = v.par_iter().map(|q| dot(q, &x)).collect();
            x.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, xs)| {
                let off = ci * CHUNK;
                for (q, c) in v.iter().zip(&coeffs) {
                    for (a, b) in xs.iter_mut().zip(&q[off..]) {
                        *a -= c * b;
                    }
                }
            });
        }
        let after = dot(&x, &x).sqrt();
        if after < 1e-10 * before {
            continue;
        }
        for a in x.iter_mut() {
            *a /= after;
        }
        v.push(x);
    }
}
