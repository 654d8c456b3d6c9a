use super::{DiscreteDomain, VectorField};
use crate::visc::ViscosityParams;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Build from unsorted triplets; duplicates are summed in input order.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|e| (e.0, e.1));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            indptr[r + 1] += indptr[r];
        }
        Self { n, indptr, indices, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match row.binary_search(&c) {
            Ok(pos) => self.data[self.indptr[r] + pos],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |p| (self.indices[p], self.data[p]))
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[p] * x[self.indices[p]];
            }
            *yr = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// max |A_rc − A_cr|.
    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m = m.max((v - self.get(c, r)).abs());
            }
        }
        m
    }
}

/// Discrete anisotropic Lamé operator A_h = −μΔₓ − δ∂_zz − (μ+λ)∇div on the
/// interior velocity unknowns, packed component-major.
#[derive(Debug, Clone)]
pub struct LameOperator {
    domain: DiscreteDomain,
    params: ViscosityParams,
    matrix: CsrMatrix,
}

impl LameOperator {
    pub fn domain(&self) -> &DiscreteDomain {
        &self.domain
    }
    pub fn params(&self) -> &ViscosityParams {
        &self.params
    }
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Interior unknown index of (node, component).
    #[inline]
    pub fn unknown(&self, i: usize, j: usize, k: usize, c: usize) -> usize {
        let m = self.domain.interior_per_axis();
        c * m * m * m + ((i - 1) * m + (j - 1)) * m + (k - 1)
    }

    pub fn pack(&self, v: &VectorField) -> Vec<f64> {
        let d = &self.domain;
        let m = d.interior_per_axis();
        let mut out = Vec::with_capacity(3 * m * m * m);
        for c in 0..3 {
            for i in 1..=m {
                for j in 1..=m {
                    for k in 1..=m {
                        out.push(v.comp(c)[d.index(i, j, k)]);
                    }
                }
            }
        }
        out
    }

    pub fn unpack(&self, x: &[f64]) -> VectorField {
        let d = self.domain;
        let m = d.interior_per_axis();
        let mut v = VectorField::zeros(d);
        let mut p = 0;
        for c in 0..3 {
            let comp = v.comp_mut(c);
            for i in 1..=m {
                for j in 1..=m {
                    for k in 1..=m {
                        comp[d.index(i, j, k)] = x[p];
                        p += 1;
                    }
                }
            }
        }
        v
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.matrix.matvec(x, &mut y);
        y
    }
}

/// Assemble A_h so that h³·xᵀA_h x equals the discrete dissipation
/// μΣ|∇ₓu|² + δΣ|∂_z u|² + (μ+λ)Σ(div u)² of the reconstructed field.
pub fn assemble_lame(domain: &DiscreteDomain, params: &ViscosityParams) -> LameOperator {
    let d = *domain;
    let n = d.cells();
    let m = d.interior_per_axis();
    let h = d.spacing();
    let h2 = h * h;
    let h3 = h2 * h;
    let nu = 3 * m * m * m;
    let unk = |i: usize, j: usize, k: usize, c: usize| c * m * m * m + ((i - 1) * m + (j - 1)) * m + (k - 1);
    let interior = |c: [usize; 3]| c.iter().all(|&x| x >= 1 && x < n);
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(nu * 7 + d.len() * 36);

    let coef = [params.mu(), params.mu(), params.delta()];
    for c in 0..3 {
        for i in 1..n {
            for j in 1..n {
                for k in 1..n {
                    let r = unk(i, j, k, c);
                    t.push((r, r, 2.0 * (coef[0] + coef[1] + coef[2]) / h2));
                    for a in 0..3 {
                        for s in [-1i64, 1] {
                            let mut q = [i, j, k];
                            q[a] = (q[a] as i64 + s) as usize;
                            if interior(q) {
                                t.push((r, unk(q[0], q[1], q[2], c), -coef[a] / h2));
                            }
                        }
                    }
                }
            }
        }
    }

    // (μ+λ)/h³ · D_aᵀ W D_b, accumulated node by node.
    let bulk = params.bulk() / h3;
    let np = d.nodes_per_axis();
    let mut rows: Vec<(usize, f64)> = Vec::with_capacity(6);
    for i in 0..np {
        for j in 0..np {
            for k in 0..np {
                let x = [i, j, k];
                let w = h3 * d.trapezoid(i) * d.trapezoid(j) * d.trapezoid(k);
                rows.clear();
                for a in 0..3 {
                    let stencil: [(i64, f64); 2] = if x[a] == 0 {
                        [(0, -1.0 / h), (1, 1.0 / h)]
                    } else if x[a] == n {
                        [(-1, -1.0 / h), (0, 1.0 / h)]
                    } else {
                        [(-1, -0.5 / h), (1, 0.5 / h)]
                    };
                    for (off, v) in stencil {
                        let mut q = x;
                        q[a] = (q[a] as i64 + off) as usize;
                        if interior(q) {
                            rows.push((unk(q[0], q[1], q[2], a), v));
                        }
                    }
                }
                for &(r, a) in &rows {
                    for &(c, b) in &rows {
                        t.push((r, c, bulk * w * (a * b)));
                    }
                }
            }
        }
    }
    LameOperator { domain: d, params: *params, matrix: CsrMatrix::from_triplets(nu, t) }
}

#[cfg(test)]
mod tests {
    use super::super::ops::{aniso_laplacian, viscous_pairing};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_by_construction() {
        let d = DiscreteDomain::new(1.0, 6).unwrap();
        let p = ViscosityParams::new(1.5, 0.8, -0.9).unwrap();
        let a = assemble_lame(&d, &p);
        assert_eq!(a.matrix().max_asymmetry(), 0.0);
    }

    #[test]
    fn center_stencil_on_five_point_grid() {
        let d = DiscreteDomain::new(1.0, 4).unwrap();
        let (mu, delta, lambda) = (2.0, 0.5, 0.25);
        let p = ViscosityParams::new(mu, delta, lambda).unwrap();
        let a = assemble_lame(&d, &p);
        let h2 = d.spacing().powi(2);
        let b = mu + lambda;
        let r = a.unknown(2, 2, 2, 0);
        assert!((a.matrix().get(r, r) - (2.0 * (2.0 * mu + delta) / h2 + b / (2.0 * h2))).abs() < 1e-12);
        assert!((a.matrix().get(r, a.unknown(1, 2, 2, 0)) + mu / h2).abs() < 1e-12);
        assert!((a.matrix().get(r, a.unknown(2, 3, 2, 0)) + mu / h2).abs() < 1e-12);
        assert!((a.matrix().get(r, a.unknown(2, 2, 1, 0)) + delta / h2).abs() < 1e-12);
        // mixed x/y difference couples u₁ at the centre to u₂ at the diagonal neighbours
        let mixed = [((1, 1), -1.0), ((1, 3), 1.0), ((3, 1), 1.0), ((3, 3), -1.0)];
        for ((i, j), s) in mixed {
            let v = a.matrix().get(r, a.unknown(i, j, 2, 1));
            assert!((v - s * b / (4.0 * h2)).abs() < 1e-12, "{i} {j} {v}");
        }
        assert_eq!(a.matrix().get(r, a.unknown(2, 2, 2, 1)), 0.0);
    }

    #[test]
    fn matches_field_operator_and_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let d = DiscreteDomain::new(1.2, 7).unwrap();
        let p = ViscosityParams::new(1.0, 0.4, -0.6).unwrap();
        let a = assemble_lame(&d, &p);
        let x: Vec<f64> = (0..a.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = a.unpack(&x);
        let ax = a.apply(&x);
        let lap = a.pack(&aniso_laplacian(&u, &p));
        for (l, r) in ax.iter().zip(&lap) {
            assert!((l + r).abs() < 1e-9 * l.abs().max(1.0));
        }
        let quad: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum::<f64>() * d.spacing().powi(3);
        let form = viscous_pairing(&u, &u, &p);
        assert!((quad - form).abs() < 1e-10 * form);
        assert_eq!(a.pack(&u), x);
    }
}
