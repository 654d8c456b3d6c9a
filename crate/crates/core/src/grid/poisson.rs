use super::DiscreteDomain;

/// Exact solver for c_x K_x + c_y K_y + c_z K_z on the interior nodes, where K
/// is the 1D Dirichlet second difference, via the discrete sine basis.
#[derive(Debug, Clone)]
pub struct TensorDirichletSolver {
    m: usize,
    s: Vec<f64>,
    lam: Vec<f64>,
}

impl TensorDirichletSolver {
    pub fn new(domain: &DiscreteDomain) -> Self {
        let m = domain.interior_per_axis();
        let n = domain.cells() as f64;
        let h = domain.spacing();
        let scale = (2.0 / n).sqrt();
        let mut s = vec![0.0; m * m];
        for i in 0..m {
            for k in 0..m {
                s[i * m + k] = scale * (std::f64::consts::PI * ((i + 1) * (k + 1)) as f64 / n).sin();
            }
        }
        let lam = (0..m)
            .map(|k| {
                let t = (std::f64::consts::PI * (k + 1) as f64 / (2.0 * n)).sin();
                4.0 * t * t / (h * h)
            })
            .collect();
        Self { m, s, lam }
    }

    pub fn size(&self) -> usize {
        self.m * self.m * self.m
    }

    pub fn eigenvalue_1d(&self, k: usize) -> f64 {
        self.lam[k]
    }

    /// Apply S⊗S⊗S (its own inverse).
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let m = self.m;
        let s = &self.s;
        let mut a = vec![0.0; x.len()];
        // along k
        for row in 0..m * m {
            let src = &x[row * m..(row + 1) * m];
            let dst = &mut a[row * m..(row + 1) * m];
            for (kp, d) in dst.iter_mut().enumerate() {
                let sr = &s[kp * m..(kp + 1) * m];
                *d = sr.iter().zip(src).map(|(p, q)| p * q).sum();
            }
        }
        // along j
        let mut b = vec![0.0; x.len()];
        for i in 0..m {
            for jp in 0..m {
                let dst = i * m * m + jp * m;
                for j in 0..m {
                    let c = s[jp * m + j];
                    let src = i * m * m + j * m;
                    for k in 0..m {
                        b[dst + k] += c * a[src + k];
                    }
                }
            }
        }
        // along i
        let plane = m * m;
        let mut out = vec![0.0; x.len()];
        for ip in 0..m {
            let dst = ip * plane;
            for i in 0..m {
                let c = s[ip * m + i];
                let src = i * plane;
                for q in 0..plane {
                    out[dst + q] += c * b[src + q];
                }
            }
        }
        out
    }

    /// Solve (c_x K_x + c_y K_y + c_z K_z) y = rhs on an m³ block.
    pub fn solve(&self, coef: [f64; 3], rhs: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut t = self.transform(rhs);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    t[(i * m + j) * m + k] /= coef[0] * self.lam[i] + coef[1] * self.lam[j] + coef[2] * self.lam[k];
                }
            }
        }
        self.transform(&t)
    }

    /// Apply c_x K_x + c_y K_y + c_z K_z.
    pub fn apply(&self, coef: [f64; 3], x: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut t = self.transform(x);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    t[(i * m + j) * m + k] *= coef[0] * self.lam[i] + coef[1] * self.lam[j] + coef[2] * self.lam[k];
                }
            }
        }
        self.transform(&t)
    }

    /// Mode indices (i, j, k) sorted by eigenvalue of the weighted operator,
    /// ties broken by index.
    pub fn lowest_modes(&self, coef: [f64; 3], count: usize) -> Vec<([usize; 3], f64)> {
        let m = self.m;
        let cap = m.min(count + 2);
        let mut all = Vec::with_capacity(cap * cap * cap);
        for i in 0..cap {
            for j in 0..cap {
                for k in 0..cap {
                    let e = coef[0] * self.lam[i] + coef[1] * self.lam[j] + coef[2] * self.lam[k];
                    all.push(([i, j, k], e));
                }
            }
        }
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(count);
        all
    }

    /// Euclidean-normalized sine mode on the m³ block.
    pub fn mode(&self, idx: [usize; 3]) -> Vec<f64> {
        let m = self.m;
        let mut v = Vec::with_capacity(m * m * m);
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    v.push(self.s[i * m + idx[0]] * self.s[j * m + idx[1]] * self.s[k * m + idx[2]]);
                }
            }
        }
        v
    }
}

/// Sharp constant of ‖v‖₆ ≤ S‖∇v‖₂ on R³, (3(π/2)^{4/3})^{-1/2}.
pub fn continuum_sobolev_constant() -> f64 {
    (3.0 * (std::f64::consts::PI / 2.0).powf(4.0 / 3.0)).powf(-0.5)
}

/// Largest ‖v‖₆/‖∇v‖₂ over grid functions vanishing on the boundary, by the
/// nonlinear power iteration v ← K⁻¹(|v|⁴v) started from the first sine mode.
/// Returns the best ratio seen.
pub fn sobolev_ratio(domain: &DiscreteDomain) -> f64 {
    let solver = TensorDirichletSolver::new(domain);
    let h3 = domain.spacing().powi(3);
    let ratio = |v: &[f64]| {
        let l6: f64 = v.iter().map(|x| x.powi(6)).sum::<f64>() * h3;
        let kv = solver.apply([1.0; 3], v);
        let grad: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum::<f64>() * h3;
        l6.powf(1.0 / 6.0) / grad.sqrt()
    };
    let mut v = solver.mode([0, 0, 0]);
    let mut best = ratio(&v);
    for _ in 0..400 {
        let rhs: Vec<f64> = v.iter().map(|x| x.powi(5)).collect();
        let mut next = solver.solve([1.0; 3], &rhs);
        let norm = next.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        next.iter_mut().for_each(|x| *x /= norm);
        let r = ratio(&next);
        v = next;
        let gain = (r - best) / best;
        best = best.max(r);
        if gain.abs() < 1e-12 {
            break;
        }
    }
    best
}

/// The constant used in estimates: the larger of the measured discrete ratio
/// and the continuum constant.
pub fn sobolev_constant(domain: &DiscreteDomain) -> f64 {
    sobolev_ratio(domain).max(continuum_sobolev_constant())
}
