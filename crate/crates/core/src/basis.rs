//! B-spline function systems on a closed interval.
//!
//! A [`BasisSystem`] owns the knot sequence and the exact Gram matrix
//! `W[m][l] = ∫ φ_m φ_l`, so that L² inner products of expanded curves reduce
//! to `b_f' W b_g`. Curves are held as [`FunctionalDatum`] coefficient vectors
//! tagged with the identity of the basis they live in.

use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{FdaError, Result};
use crate::quadrature::gauss_legendre;

/// Relative singular-value cutoff used when fitting by least squares.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Identity of a basis system. Structural: two bases built from the same
/// order and knot sequence share an id, and their data are combinable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisId(u64);

#[derive(Debug, Clone)]
pub struct BasisSystem {
    a: f64,
    b: f64,
    order: usize,
    num_basis: usize,
    knots: Vec<f64>,
    gram: DMatrix<f64>,
    gram_sqrt: DMatrix<f64>,
    gram_inv_sqrt: DMatrix<f64>,
    gram_positive_definite: bool,
    id: BasisId,
}

/// One curve in coefficient form.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDatum {
    basis_id: BasisId,
    coeffs: DVector<f64>,
}

impl FunctionalDatum {
    pub fn new(basis_id: BasisId, coeffs: DVector<f64>) -> Self {
        Self { basis_id, coeffs }
    }

    pub fn basis_id(&self) -> BasisId {
        self.basis_id
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn check_same_basis(&self, other: &FunctionalDatum) -> Result<()> {
        if self.basis_id != other.basis_id || self.coeffs.len() != other.coeffs.len() {
            return Err(FdaError::BasisMismatch);
        }
        Ok(())
    }

    /// `self + other`.
    pub fn add(&self, other: &FunctionalDatum) -> Result<FunctionalDatum> {
        self.check_same_basis(other)?;
        Ok(Self::new(self.basis_id, &self.coeffs + &other.coeffs))
    }

    /// `self - other`.
    pub fn sub(&self, other: &FunctionalDatum) -> Result<FunctionalDatum> {
        self.check_same_basis(other)?;
        Ok(Self::new(self.basis_id, &self.coeffs - &other.coeffs))
    }

    pub fn scale(&self, c: f64) -> FunctionalDatum {
        Self::new(self.basis_id, &self.coeffs * c)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &FunctionalDatum) -> Result<FunctionalDatum> {
        self.check_same_basis(other)?;
        Ok(Self::new(self.basis_id, &self.coeffs + &other.coeffs * c))
    }
}

impl BasisSystem {
    /// B-spline basis with uniform interior knots and `order`-fold boundary knots.
    pub fn bspline(a: f64, b: f64, order: usize, num_basis: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(FdaError::InvalidDomain { a, b });
        }
        if order == 0 {
            return Err(FdaError::InvalidConfiguration("spline order must be at least 1".into()));
        }
        if num_basis < order {
            return Err(FdaError::InvalidConfiguration(format!(
                "num_basis ({num_basis}) must be at least the spline order ({order})"
            )));
        }
        let interior = num_basis - order;
        let mut knots = Vec::with_capacity(num_basis + order);
        knots.extend(std::iter::repeat_n(a, order));
        for i in 1..=interior {
            knots.push(a + (b - a) * i as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(b, order));
        Self::from_knots(order, knots)
    }

    /// General B-spline system from an explicit non-decreasing knot vector.
    pub fn from_knots(order: usize, knots: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(FdaError::InvalidConfiguration("spline order must be at least 1".into()));
        }
        if knots.len() < 2 * order {
            return Err(FdaError::InvalidConfiguration(format!(
                "{} knots cannot carry a spline of order {order}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(FdaError::InvalidConfiguration("knots must be finite and non-decreasing".into()));
        }
        let num_basis = knots.len() - order;
        let a = knots[order - 1];
        let b = knots[num_basis];
        if a >= b {
            return Err(FdaError::InvalidDomain { a, b });
        }

        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        "bspline".hash(&mut hasher);
        order.hash(&mut hasher);
        for k in &knots {
            k.to_bits().hash(&mut hasher);
        }
        let id = BasisId(hasher.finish());

        let mut basis = Self {
            a,
            b,
            order,
            num_basis,
            knots,
            gram: DMatrix::zeros(num_basis, num_basis),
            gram_sqrt: DMatrix::zeros(num_basis, num_basis),
            gram_inv_sqrt: DMatrix::zeros(num_basis, num_basis),
            gram_positive_definite: false,
            id,
        };
        basis.gram = basis.compute_gram();
        basis.compute_gram_roots();
        Ok(basis)
    }

    pub fn id(&self) -> BasisId {
        self.id
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Symmetric square root `W^{1/2}`.
    pub fn gram_sqrt(&self) -> Result<&DMatrix<f64>> {
        if !self.gram_positive_definite {
            return Err(FdaError::BasisDegenerate);
        }
        Ok(&self.gram_sqrt)
    }

    /// Symmetric inverse square root `W^{-1/2}`.
    pub fn gram_inv_sqrt(&self) -> Result<&DMatrix<f64>> {
        if !self.gram_positive_definite {
            return Err(FdaError::BasisDegenerate);
        }
        Ok(&self.gram_inv_sqrt)
    }

    pub fn datum(&self, coeffs: DVector<f64>) -> Result<FunctionalDatum> {
        if coeffs.len() != self.num_basis {
            return Err(FdaError::InvalidConfiguration(format!(
                "expected {} coefficients, got {}",
                self.num_basis,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(FdaError::InvalidConfiguration("coefficients must be finite".into()));
        }
        Ok(FunctionalDatum::new(self.id, coeffs))
    }

    pub fn zero(&self) -> FunctionalDatum {
        FunctionalDatum::new(self.id, DVector::zeros(self.num_basis))
    }

    /// The `m`-th basis function as a datum (unit coordinate vector).
    pub fn unit(&self, m: usize) -> FunctionalDatum {
        let mut c = DVector::zeros(self.num_basis);
        c[m] = 1.0;
        FunctionalDatum::new(self.id, c)
    }

    fn contains(&self, t: f64) -> bool {
        let slack = 1e-12 * (self.b - self.a);
        t >= self.a - slack && t <= self.b + slack
    }

    fn find_span(&self, t: f64) -> usize {
        let p = self.order - 1;
        let n = self.num_basis - 1;
        if t >= self.knots[n + 1] {
            return n;
        }
        if t <= self.knots[p] {
            return p;
        }
        // knots[lo] <= t < knots[hi]
        let (mut lo, mut hi) = (p, n + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Non-zero basis values at `t` (Cox–de Boor). Returns the index of the
    /// first non-zero function and the `order` values starting there.
    fn nonzero_values(&self, t: f64) -> (usize, Vec<f64>) {
        let p = self.order - 1;
        let span = self.find_span(t);
        let u = &self.knots;
        let mut values = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        values[0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { values[r] / denom };
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        (span - p, values)
    }

    /// Values of every basis function at `t`; all zero outside the domain.
    pub fn basis_row(&self, t: f64) -> DVector<f64> {
        let mut row = DVector::zeros(self.num_basis);
        if !t.is_finite() || !self.contains(t) {
            return row;
        }
        let t = t.clamp(self.a, self.b);
        let (first, values) = self.nonzero_values(t);
        for (r, v) in values.into_iter().enumerate() {
            row[first + r] = v;
        }
        row
    }

    /// Design matrix `Φ[j][m] = φ_m(t_j)`.
    pub fn design_matrix(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let mut phi = DMatrix::zeros(grid.len(), self.num_basis);
        for (j, &t) in grid.iter().enumerate() {
            if !t.is_finite() || !self.contains(t) {
                return Err(FdaError::OutOfDomain { t, a: self.a, b: self.b });
            }
            let (first, values) = self.nonzero_values(t.clamp(self.a, self.b));
            for (r, v) in values.into_iter().enumerate() {
                phi[(j, first + r)] = v;
            }
        }
        Ok(phi)
    }

    fn compute_gram(&self) -> DMatrix<f64> {
        let m = self.num_basis;
        let mut gram = DMatrix::zeros(m, m);
        // Products of two degree-(order-1) pieces: `order` nodes are exact.
        let (nodes, weights) = gauss_legendre(self.order);
        let p = self.order - 1;
        for span in p..self.num_basis {
            let (lo, hi) = (self.knots[span], self.knots[span + 1]);
            if hi <= lo {
                continue;
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (x, w) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let (first, values) = self.nonzero_values(t);
                for (r, vr) in values.iter().enumerate() {
                    for (s, vs) in values.iter().enumerate() {
                        gram[(first + r, first + s)] += w * half * vr * vs;
                    }
                }
            }
        }
        // exact symmetry
        (&gram + gram.transpose()) * 0.5
    }

    fn compute_gram_roots(&mut self) {
        let eig = SymmetricEigen::new(self.gram.clone());
        let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if max.is_nan() || max <= 0.0 || min <= 1e-10 * max {
            self.gram_positive_definite = false;
            return;
        }
        let v = &eig.eigenvectors;
        let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let s = v * sqrt * v.transpose();
        let is = v * inv_sqrt * v.transpose();
        self.gram_sqrt = (&s + s.transpose()) * 0.5;
        self.gram_inv_sqrt = (&is + is.transpose()) * 0.5;
        self.gram_positive_definite = true;
    }

    fn check(&self, f: &FunctionalDatum) -> Result<()> {
        if f.basis_id != self.id || f.coeffs.len() != self.num_basis {
            return Err(FdaError::BasisMismatch);
        }
        Ok(())
    }

    /// `Σ_m β_m φ_m(t)` at every grid point.
    pub fn evaluate(&self, f: &FunctionalDatum, grid: &[f64]) -> Result<Vec<f64>> {
        self.check(f)?;
        let phi = self.design_matrix(grid)?;
        Ok((phi * &f.coeffs).iter().copied().collect())
    }

    /// L²(T) inner product `b_f' W b_g`.
    pub fn inner_product(&self, f: &FunctionalDatum, g: &FunctionalDatum) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        Ok(f.coeffs.dot(&(&self.gram * &g.coeffs)))
    }

    pub fn norm(&self, f: &FunctionalDatum) -> Result<f64> {
        Ok(self.inner_product(f, f)?.max(0.0).sqrt())
    }

    /// Basis of order `order - d` on the same breakpoints, in which the
    /// `d`-th derivatives of this basis's curves are represented exactly.
    pub fn derivative_basis(&self, d: usize) -> Result<BasisSystem> {
        if d == 0 {
            return Err(FdaError::InvalidConfiguration("derivative order must be at least 1".into()));
        }
        if d >= self.order {
            return Err(FdaError::DerivativeOrderTooHigh { requested: d, order: self.order });
        }
        let knots = self.knots[d..self.knots.len() - d].to_vec();
        BasisSystem::from_knots(self.order - d, knots)
    }

    /// Analytic `d`-th derivative; the result lives in [`Self::derivative_basis`].
    pub fn derivative(&self, f: &FunctionalDatum, d: usize) -> Result<FunctionalDatum> {
        self.check(f)?;
        let target = self.derivative_basis(d)?;
        let mut coeffs: Vec<f64> = f.coeffs.iter().copied().collect();
        let mut order = self.order;
        for offset in 0..d {
            let k = order - 1;
            let next: Vec<f64> = (0..coeffs.len() - 1)
                .map(|i| {
                    let span = self.knots[offset + i + order] - self.knots[offset + i + 1];
                    if span > 0.0 {
                        k as f64 * (coeffs[i + 1] - coeffs[i]) / span
                    } else {
                        0.0
                    }
                })
                .collect();
            coeffs = next;
            order -= 1;
        }
        Ok(FunctionalDatum::new(target.id, DVector::from_vec(coeffs)))
    }

    /// Least-squares smoother for a fixed observation grid.
    pub fn smoother(&self, grid: &[f64]) -> Result<Smoother> {
        Smoother::new(self, grid)
    }

    /// Ordinary least-squares fit of the points `(t_j, y_j)`.
    pub fn smooth_curve(&self, points: &[(f64, f64)]) -> Result<FunctionalDatum> {
        let grid: Vec<f64> = points.iter().map(|p| p.0).collect();
        let values: Vec<f64> = points.iter().map(|p| p.1).collect();
        self.smoother(&grid)?.fit(&values)
    }
}

/// Precomputed pseudo-inverse of a design matrix, for smoothing many curves
/// observed on one shared grid.
#[derive(Debug, Clone)]
pub struct Smoother {
    basis_id: BasisId,
    pinv: DMatrix<f64>,
    grid_len: usize,
}

impl Smoother {
    fn new(basis: &BasisSystem, grid: &[f64]) -> Result<Self> {
        let m = basis.num_basis();
        let design = basis.design_matrix(grid)?;
        if grid.len() < m {
            let rank = SVD::new(design, false, false)
                .singular_values
                .iter()
                .filter(|&&s| s > 0.0)
                .count()
                .min(grid.len());
            return Err(FdaError::RankDeficientFit { rank, required: m });
        }
        let svd = SVD::new(design, true, true);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > RANK_TOLERANCE * smax)
            .count();
        if rank < m || smax.is_nan() || smax <= 0.0 {
            return Err(FdaError::RankDeficientFit { rank, required: m });
        }
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let inv_s = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
        let pinv = v_t.transpose() * inv_s * u.transpose();
        Ok(Self { basis_id: basis.id(), pinv, grid_len: grid.len() })
    }

    pub fn fit(&self, values: &[f64]) -> Result<FunctionalDatum> {
        if values.len() != self.grid_len {
            return Err(FdaError::InvalidConfiguration(format!(
                "expected {} observations, got {}",
                self.grid_len,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(FdaError::InvalidConfiguration(format!("non-finite observation {bad}")));
        }
        let y = DVector::from_column_slice(values);
        Ok(FunctionalDatum::new(self.basis_id, &self.pinv * y))
    }
}
