//! Box domains Ω_R = (−R, R)³ on a uniform vertex grid, nodal fields and
//! trapezoidal quadrature.
//!
//! Nodes sit at y = −R + i·h, i = 0..=N, with h = 2R/N. Quadrature weights are
//! h³·tᵢtⱼt_k where t = ½ on the two end nodes of an axis and 1 elsewhere, so
//! every discrete operator in [`ops`] satisfies a summation-by-parts identity
//! with respect to [`inner`]. Densities live on all nodes (Neumann closure);
//! velocities vanish on the boundary nodes (no-slip).

mod eigen;
mod lame;
pub mod ops;
mod poisson;
mod snapshot;

pub use eigen::{eigenbasis, eigenbasis_with, EigenOptions, GalerkinBasis};
pub use lame::{assemble_lame, CsrMatrix, LameOperator};
pub use poisson::{continuum_sobolev_constant, sobolev_constant, sobolev_ratio, TensorDirichletSolver};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot, SnapshotField};

use crate::error::{finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteDomain {
    extent: f64,
    cells: usize,
    h: f64,
}

impl DiscreteDomain {
    pub fn new(extent: f64, cells: usize) -> Result<Self> {
        finite("extent", extent)?;
        if extent <= 0.0 {
            return Err(Error::Domain(format!("extent must be positive, got {extent}")));
        }
        if cells < 4 {
            return Err(Error::Domain(format!("need at least 4 cells per axis, got {cells}")));
        }
        Ok(Self { extent, cells, h: 2.0 * extent / cells as f64 })
    }

    /// Domain of half-width `extent` with the given spacing; 2R/h must be an integer.
    pub fn with_spacing(extent: f64, h: f64) -> Result<Self> {
        finite("spacing", h)?;
        let n = 2.0 * extent / h;
        let cells = n.round();
        if (n - cells).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::Domain(format!("extent {extent} is not a multiple of h/2 = {}", h / 2.0)));
        }
        Self::new(extent, cells as usize)
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }
    pub fn cells(&self) -> usize {
        self.cells
    }
    pub fn spacing(&self) -> f64 {
        self.h
    }
    pub fn nodes_per_axis(&self) -> usize {
        self.cells + 1
    }
    pub fn len(&self) -> usize {
        let n = self.nodes_per_axis();
        n * n * n
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Number of interior nodes per axis.
    pub fn interior_per_axis(&self) -> usize {
        self.cells - 1
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.extent + i as f64 * self.h
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.nodes_per_axis();
        (i * n + j) * n + k
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.nodes_per_axis();
        (idx / (n * n), (idx / n) % n, idx % n)
    }

    /// Index stride along an axis (0 = x, 1 = y, 2 = z).
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        let n = self.nodes_per_axis();
        match axis {
            0 => n * n,
            1 => n,
            _ => 1,
        }
    }

    #[inline]
    pub fn trapezoid(&self, i: usize) -> f64 {
        if i == 0 || i == self.cells {
            0.5
        } else {
            1.0
        }
    }

    pub fn weight(&self, idx: usize) -> f64 {
        let (i, j, k) = self.unindex(idx);
        self.h.powi(3) * self.trapezoid(i) * self.trapezoid(j) * self.trapezoid(k)
    }

    /// Quadrature weights of all nodes in index order.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.nodes_per_axis();
        let h3 = self.h.powi(3);
        let mut w = Vec::with_capacity(self.len());
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    w.push(h3 * self.trapezoid(i) * self.trapezoid(j) * self.trapezoid(k));
                }
            }
        }
        w
    }

    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        let n = self.cells;
        i == 0 || j == 0 || k == 0 || i == n || j == n || k == n
    }

    pub fn position(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.unindex(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.cells == other.cells && self.extent.to_bits() == other.extent.to_bits()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "domain mismatch: (R={}, N={}) vs (R={}, N={})",
                self.extent, self.cells, other.extent, other.cells
            )))
        }
    }

    /// Node offset of `inner` inside `self` when both share the spacing.
    pub fn nested_offset(&self, inner: &Self) -> Result<usize> {
        let rel = (self.h - inner.h).abs() / self.h;
        if rel > 1e-12 || inner.extent > self.extent * (1.0 + 1e-12) {
            return Err(Error::Domain("domains are not nested on a common grid".into()));
        }
        let off = (self.extent - inner.extent) / self.h;
        let o = off.round();
        if (off - o).abs() > 1e-9 {
            return Err(Error::Domain("domain offsets are not grid aligned".into()));
        }
        Ok(o as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    domain: DiscreteDomain,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(domain: DiscreteDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::Domain(format!("expected {} values, got {}", domain.len(), values.len())));
        }
        Ok(Self { domain, values })
    }
    pub fn constant(domain: DiscreteDomain, c: f64) -> Self {
        Self { domain, values: vec![c; domain.len()] }
    }
    pub fn zeros(domain: DiscreteDomain) -> Self {
        Self::constant(domain, 0.0)
    }
    pub fn from_fn(domain: DiscreteDomain, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..domain.len()).map(|idx| f(domain.position(idx))).collect();
        Self { domain, values }
    }
    pub fn domain(&self) -> &DiscreteDomain {
        &self.domain
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { domain: self.domain, values: self.values.iter().map(|&v| f(v)).collect() }
    }
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.domain.check_same(&other.domain)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { domain: self.domain, values })
    }
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Values on a nested sub-box sharing the spacing.
    pub fn restrict(&self, target: &DiscreteDomain) -> Result<Self> {
        let off = self.domain.nested_offset(target)?;
        let n = target.nodes_per_axis();
        let mut values = Vec::with_capacity(target.len());
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    values.push(self.values[self.domain.index(i + off, j + off, k + off)]);
                }
            }
        }
        Ok(Self { domain: *target, values })
    }

    /// Embed into a larger box with the same spacing, filling new nodes with `fill`.
    pub fn extend(&self, target: &DiscreteDomain, fill: f64) -> Result<Self> {
        let off = target.nested_offset(&self.domain)?;
        let mut out = Self::constant(*target, fill);
        let n = self.domain.nodes_per_axis();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out.values[target.index(i + off, j + off, k + off)] = self.values[self.domain.index(i, j, k)];
                }
            }
        }
        Ok(out)
    }

    /// Trilinear interpolation onto another grid of the same box.
    pub fn interpolate(&self, target: &DiscreteDomain) -> Result<Self> {
        let stencil = InterpStencil::new(&self.domain, target, 2)?;
        Ok(Self { domain: *target, values: stencil.apply(&self.values) })
    }

    /// Tricubic Lagrange interpolation; exact for cubics in each variable.
    pub fn interpolate_cubic(&self, target: &DiscreteDomain) -> Result<Self> {
        let stencil = InterpStencil::new(&self.domain, target, 4)?;
        Ok(Self { domain: *target, values: stencil.apply(&self.values) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    domain: DiscreteDomain,
    comps: [Vec<f64>; 3],
}

impl VectorField {
    pub fn zeros(domain: DiscreteDomain) -> Self {
        let z = vec![0.0; domain.len()];
        Self { domain, comps: [z.clone(), z.clone(), z] }
    }
    pub fn new(domain: DiscreteDomain, comps: [Vec<f64>; 3]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != domain.len()) {
            return Err(Error::Domain(format!("each component needs {} values", domain.len())));
        }
        Ok(Self { domain, comps })
    }
    pub fn from_fn(domain: DiscreteDomain, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(domain);
        for idx in 0..domain.len() {
            let v = f(domain.position(idx));
            for c in 0..3 {
                out.comps[c][idx] = v[c];
            }
        }
        out
    }
    /// As [`VectorField::from_fn`] with the boundary nodes set to zero.
    pub fn from_fn_no_slip(domain: DiscreteDomain, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::from_fn(domain, f);
        out.enforce_no_slip();
        out
    }
    pub fn domain(&self) -> &DiscreteDomain {
        &self.domain
    }
    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }
    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }
    pub fn comps(&self) -> &[Vec<f64>; 3] {
        &self.comps
    }
    pub fn at(&self, idx: usize) -> [f64; 3] {
        [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx]]
    }
    pub fn enforce_no_slip(&mut self) {
        let n = self.domain.nodes_per_axis();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if self.domain.is_boundary(i, j, k) {
                        let idx = self.domain.index(i, j, k);
                        for c in 0..3 {
                            self.comps[c][idx] = 0.0;
                        }
                    }
                }
            }
        }
    }
    pub fn vanishes_on_boundary(&self) -> bool {
        let n = self.domain.nodes_per_axis();
        (0..self.domain.len()).all(|idx| {
            let (i, j, k) = self.domain.unindex(idx);
            let b = i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1;
            !b || (0..3).all(|c| self.comps[c][idx] == 0.0)
        })
    }
    /// Pointwise |v|².
    pub fn norm_sq(&self) -> ScalarField {
        let values = (0..self.domain.len())
            .map(|i| self.comps[0][i].powi(2) + self.comps[1][i].powi(2) + self.comps[2][i].powi(2))
            .collect();
        ScalarField { domain: self.domain, values }
    }
    pub fn scale(&self, s: f64) -> Self {
        let comps = [0, 1, 2].map(|c| self.comps[c].iter().map(|v| v * s).collect());
        Self { domain: self.domain, comps }
    }
    /// Componentwise a·self + b·other.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.domain.check_same(&other.domain)?;
        let comps = [0, 1, 2].map(|c| self.comps[c].iter().zip(&other.comps[c]).map(|(x, y)| a * x + b * y).collect());
        Ok(Self { domain: self.domain, comps })
    }
    /// Pointwise product with a scalar field.
    pub fn mul_scalar(&self, s: &ScalarField) -> Result<Self> {
        self.domain.check_same(&s.domain)?;
        let comps = [0, 1, 2].map(|c| self.comps[c].iter().zip(&s.values).map(|(x, y)| x * y).collect());
        Ok(Self { domain: self.domain, comps })
    }
    pub fn restrict(&self, target: &DiscreteDomain) -> Result<Self> {
        let comps = [0, 1, 2].map(|c| {
            ScalarField { domain: self.domain, values: self.comps[c].clone() }.restrict(target).map(|s| s.values)
        });
        let [a, b, c] = comps;
        Ok(Self { domain: *target, comps: [a?, b?, c?] })
    }
    pub fn extend(&self, target: &DiscreteDomain) -> Result<Self> {
        let comps = [0, 1, 2].map(|c| {
            ScalarField { domain: self.domain, values: self.comps[c].clone() }.extend(target, 0.0).map(|s| s.values)
        });
        let [a, b, c] = comps;
        Ok(Self { domain: *target, comps: [a?, b?, c?] })
    }
    pub fn interpolate(&self, target: &DiscreteDomain) -> Result<Self> {
        let stencil = InterpStencil::new(&self.domain, target, 2)?;
        Ok(Self { domain: *target, comps: [0, 1, 2].map(|c| stencil.apply(&self.comps[c])) })
    }
    pub fn interpolate_cubic(&self, target: &DiscreteDomain) -> Result<Self> {
        let stencil = InterpStencil::new(&self.domain, target, 4)?;
        Ok(Self { domain: *target, comps: [0, 1, 2].map(|c| stencil.apply(&self.comps[c])) })
    }
}

/// Precomputed tensor-product interpolation weights between two grids of the
/// same box.
struct InterpStencil {
    src: DiscreteDomain,
    axis: Vec<Vec<(usize, f64)>>,
    target: DiscreteDomain,
}

impl InterpStencil {
    /// `points` = 2 gives trilinear, 4 gives tricubic Lagrange (stencil
    /// shifted inward at the ends).
    fn new(src: &DiscreteDomain, target: &DiscreteDomain, points: usize) -> Result<Self> {
        if (src.extent - target.extent).abs() > 1e-12 * src.extent {
            return Err(Error::Domain("interpolation needs the same box".into()));
        }
        let points = points.min(src.cells + 1);
        let axis = (0..target.nodes_per_axis())
            .map(|i| {
                let s = i as f64 * src.cells as f64 / target.cells as f64;
                let near = s.round();
                if (s - near).abs() < 1e-12 {
                    return vec![(near as usize, 1.0)];
                }
                let lo = s.floor() as usize;
                let first = (lo + 1).saturating_sub(points / 2).min(src.cells + 1 - points);
                (first..first + points)
                    .map(|a| {
                        let w = (first..first + points)
                            .filter(|&b| b != a)
                            .map(|b| (s - b as f64) / (a as f64 - b as f64))
                            .product();
                        (a, w)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { src: *src, axis, target: *target })
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.target.nodes_per_axis();
        let mut out = Vec::with_capacity(self.target.len());
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut acc = 0.0;
                    for &(a, wi) in &self.axis[i] {
                        for &(b, wj) in &self.axis[j] {
                            for &(c, wk) in &self.axis[k] {
                                acc += wi * wj * wk * v[self.src.index(a, b, c)];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }
}

/// Σ w·f over all nodes, in index order.
pub fn integrate(field: &ScalarField) -> f64 {
    weighted_sum(&field.domain, |idx| field.values[idx])
}

pub fn inner(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.domain.check_same(&b.domain)?;
    Ok(weighted_sum(&a.domain, |idx| a.values[idx] * b.values[idx]))
}

pub fn inner_vec(a: &VectorField, b: &VectorField) -> Result<f64> {
    a.domain.check_same(&b.domain)?;
    Ok(weighted_sum(&a.domain, |idx| {
        a.comps[0][idx] * b.comps[0][idx] + a.comps[1][idx] * b.comps[1][idx] + a.comps[2][idx] * b.comps[2][idx]
    }))
}

/// Σ w·f(idx) over all nodes of `domain`.
pub fn weighted_sum(domain: &DiscreteDomain, f: impl Fn(usize) -> f64) -> f64 {
    let n = domain.nodes_per_axis();
    let h3 = domain.h.powi(3);
    let mut total = 0.0;
    let mut idx = 0;
    for i in 0..n {
        let ti = domain.trapezoid(i);
        for j in 0..n {
            let tij = ti * domain.trapezoid(j);
            let mut line = 0.0;
            for k in 0..n {
                line += domain.trapezoid(k) * f(idx);
                idx += 1;
            }
            total += tij * line;
        }
    }
    h3 * total
}

/// Discrete L^p norm (p finite) or max norm (p = ∞) of pointwise values.
pub fn lp_norm(domain: &DiscreteDomain, values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    weighted_sum(domain, |idx| values[idx].abs().powf(p)).powf(1.0 / p)
}
