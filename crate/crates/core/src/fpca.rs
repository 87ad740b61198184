//! Functional principal components.
//!
//! Sample covariance operators are estimated in coefficient space. With
//! coefficient covariance `Σ_b` (divisor `n`) and Gram matrix `W`, the
//! operator's eigenpairs are those of the symmetric matrix
//! `W^{1/2} Σ_b W^{1/2}`; an eigenvector `u` maps back to the eigenfunction
//! with coefficients `W^{-1/2} u`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::basis::{BasisId, BasisSystem, FunctionalDatum};
use crate::error::{FdaError, Result};

/// Relative eigenvalue floor: components below `EIGEN_FLOOR_REL * λ_1` are dropped.
pub const EIGEN_FLOOR_REL: f64 = 1e-10;
/// Absolute eigenvalue floor.
pub const EIGEN_FLOOR_ABS: f64 = 1e-14;

/// Curves with class labels `0..num_classes`.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    data: Vec<FunctionalDatum>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledSample {
    pub fn new(data: Vec<FunctionalDatum>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if data.len() != labels.len() {
            return Err(FdaError::InvalidConfiguration(format!(
                "{} curves but {} labels",
                data.len(),
                labels.len()
            )));
        }
        if data.is_empty() {
            return Err(FdaError::EmptySample);
        }
        if num_classes == 0 {
            return Err(FdaError::InvalidConfiguration("at least one class required".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(FdaError::InvalidConfiguration(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        for f in &data[1..] {
            f.check_same_basis(&data[0])?;
        }
        let sample = Self { data, labels, num_classes };
        if let Some(g) = sample.class_counts().iter().position(|&c| c == 0) {
            return Err(FdaError::InsufficientData(format!("class {g} has no curves")));
        }
        Ok(sample)
    }

    pub fn data(&self) -> &[FunctionalDatum] {
        &self.data
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn basis_id(&self) -> BasisId {
        self.data[0].basis_id()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Indices of the curves in class `g`.
    pub fn class_indices(&self, g: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == g).collect()
    }

    /// Training proportions `n_g / n`.
    pub fn proportions(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.class_counts().into_iter().map(|c| c as f64 / n).collect()
    }

    /// Sub-sample keeping the class numbering; fails if a class empties.
    pub fn subset(&self, indices: &[usize]) -> Result<LabeledSample> {
        let data = indices.iter().map(|&i| self.data[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        LabeledSample::new(data, labels, self.num_classes)
    }
}

/// Which covariance operator to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    Global,
    PooledWithinClass,
    PerClass,
}

/// Covariance operator a fitted model describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpcaMode {
    Global,
    PooledWithinClass,
    PerClass(usize),
}

/// Mean used to center a curve before projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Center {
    Global,
    Class(usize),
}

#[derive(Debug, Clone)]
pub struct FpcaModel {
    basis_id: BasisId,
    mode: FpcaMode,
    overall_mean: FunctionalDatum,
    class_means: Vec<FunctionalDatum>,
    eigenfunctions: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    projection: DMatrix<f64>,
    sample_size: usize,
}

/// Coefficientwise average.
pub fn sample_mean(sample: &[FunctionalDatum]) -> Result<FunctionalDatum> {
    let first = sample.first().ok_or(FdaError::EmptySample)?;
    let mut acc = DVector::zeros(first.len());
    for f in sample {
        f.check_same_basis(first)?;
        acc += f.coeffs();
    }
    Ok(FunctionalDatum::new(first.basis_id(), acc / sample.len() as f64))
}

/// Estimate one model (or, for [`FitMode::PerClass`], one per class).
pub fn fit_fpca(basis: &BasisSystem, sample: &LabeledSample, mode: FitMode) -> Result<Vec<FpcaModel>> {
    match mode {
        FitMode::Global => Ok(vec![fit_global(basis, sample.data())?]),
        FitMode::PooledWithinClass => Ok(vec![fit_pooled(basis, sample)?]),
        FitMode::PerClass => fit_per_class(basis, sample),
    }
}

/// Eigenstructure of the sample covariance operator of `data`.
pub fn fit_global(basis: &BasisSystem, data: &[FunctionalDatum]) -> Result<FpcaModel> {
    if data.len() < 2 {
        return Err(FdaError::InsufficientData(format!(
            "global covariance needs at least 2 curves, got {}",
            data.len()
        )));
    }
    check_basis(basis, &data[0])?;
    let mean = sample_mean(data)?;
    let residuals: Vec<DVector<f64>> = data.iter().map(|f| f.coeffs() - mean.coeffs()).collect();
    let (eigenfunctions, eigenvalues, projection) = eigen_decompose(basis, &residuals, 1)?;
    Ok(FpcaModel {
        basis_id: basis.id(),
        mode: FpcaMode::Global,
        overall_mean: mean,
        class_means: Vec::new(),
        eigenfunctions,
        eigenvalues,
        projection,
        sample_size: data.len(),
    })
}

/// Within-class covariance operator shared by all classes: every curve is
/// centered at its own class mean and the divisor is the total size `n`.
pub fn fit_pooled(basis: &BasisSystem, sample: &LabeledSample) -> Result<FpcaModel> {
    let g = sample.num_classes();
    if sample.len() < g + 1 {
        return Err(FdaError::InsufficientData(format!(
            "pooled covariance needs more than {g} curves, got {}",
            sample.len()
        )));
    }
    check_basis(basis, &sample.data()[0])?;
    let class_means = class_means(sample)?;
    let residuals: Vec<DVector<f64>> = sample
        .data()
        .iter()
        .zip(sample.labels())
        .map(|(f, &l)| f.coeffs() - class_means[l].coeffs())
        .collect();
    let (eigenfunctions, eigenvalues, projection) = eigen_decompose(basis, &residuals, g)?;
    Ok(FpcaModel {
        basis_id: basis.id(),
        mode: FpcaMode::PooledWithinClass,
        overall_mean: sample_mean(sample.data())?,
        class_means,
        eigenfunctions,
        eigenvalues,
        projection,
        sample_size: sample.len(),
    })
}

/// One covariance operator per class, each with divisor `n_g`.
pub fn fit_per_class(basis: &BasisSystem, sample: &LabeledSample) -> Result<Vec<FpcaModel>> {
    check_basis(basis, &sample.data()[0])?;
    let counts = sample.class_counts();
    if let Some(g) = counts.iter().position(|&c| c < 2) {
        return Err(FdaError::InsufficientData(format!(
            "class {g} has {} curves; per-class covariance needs at least 2",
            counts[g]
        )));
    }
    let means = class_means(sample)?;
    (0..sample.num_classes())
        .map(|g| {
            let residuals: Vec<DVector<f64>> = sample
                .data()
                .iter()
                .zip(sample.labels())
                .filter(|(_, &l)| l == g)
                .map(|(f, _)| f.coeffs() - means[g].coeffs())
                .collect();
            let (eigenfunctions, eigenvalues, projection) = eigen_decompose(basis, &residuals, 1)?;
            Ok(FpcaModel {
                basis_id: basis.id(),
                mode: FpcaMode::PerClass(g),
                overall_mean: sample_mean(sample.data())?,
                class_means: means.clone(),
                eigenfunctions,
                eigenvalues,
                projection,
                sample_size: counts[g],
            })
        })
        .collect()
}

fn check_basis(basis: &BasisSystem, f: &FunctionalDatum) -> Result<()> {
    if f.basis_id() != basis.id() || f.len() != basis.num_basis() {
        return Err(FdaError::BasisMismatch);
    }
    Ok(())
}

fn class_means(sample: &LabeledSample) -> Result<Vec<FunctionalDatum>> {
    (0..sample.num_classes())
        .map(|g| {
            let members: Vec<FunctionalDatum> = sample
                .class_indices(g)
                .into_iter()
                .map(|i| sample.data()[i].clone())
                .collect();
            sample_mean(&members)
        })
        .collect()
}

/// Returns (eigenfunction coefficients, eigenvalues, `W`-weighted projection).
fn eigen_decompose(
    basis: &BasisSystem,
    residuals: &[DVector<f64>],
    centers: usize,
) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let m = basis.num_basis();
    let n = residuals.len();
    let w_sqrt = basis.gram_sqrt()?;
    let w_inv_sqrt = basis.gram_inv_sqrt()?;

    let mut cov = DMatrix::<f64>::zeros(m, m);
    for r in residuals {
        cov.ger(1.0, r, r, 1.0);
    }
    cov /= n as f64;
    let op = w_sqrt * cov * w_sqrt;
    let op = (&op + op.transpose()) * 0.5;
    let eig = SymmetricEigen::new(op);

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]];
    let floor = (EIGEN_FLOOR_REL * top).max(EIGEN_FLOOR_ABS);
    let cap = m.min(n.saturating_sub(centers));
    let kept: Vec<usize> = order
        .into_iter()
        .take_while(|&i| eig.eigenvalues[i] >= floor)
        .take(cap)
        .collect();

    let k = kept.len();
    let mut eigenfunctions = DMatrix::zeros(m, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (col, &i) in kept.iter().enumerate() {
        let u = eig.eigenvectors.column(i);
        let mut c = w_inv_sqrt * u;
        let pivot = c.iter().fold(0.0_f64, |best, &v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            c = -c;
        }
        eigenfunctions.set_column(col, &c);
        eigenvalues.push(eig.eigenvalues[i]);
    }
    let projection = basis.gram() * &eigenfunctions;
    Ok((eigenfunctions, eigenvalues, projection))
}

impl FpcaModel {
    /// Global model from known eigenpairs; columns of `eigenfunctions` are
    /// basis coefficients of `W`-orthonormal functions.
    pub fn from_eigenpairs(
        basis: &BasisSystem,
        mean: FunctionalDatum,
        eigenfunctions: DMatrix<f64>,
        eigenvalues: Vec<f64>,
    ) -> Result<Self> {
        check_basis(basis, &mean)?;
        if eigenfunctions.nrows() != basis.num_basis() || eigenfunctions.ncols() != eigenvalues.len() {
            return Err(FdaError::InvalidConfiguration("eigenpair shapes do not match the basis".into()));
        }
        if eigenvalues.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(FdaError::InvalidConfiguration("eigenvalues must be positive and finite".into()));
        }
        let projection = basis.gram() * &eigenfunctions;
        Ok(Self {
            basis_id: basis.id(),
            mode: FpcaMode::Global,
            overall_mean: mean,
            class_means: Vec::new(),
            eigenfunctions,
            eigenvalues,
            projection,
            sample_size: 0,
        })
    }

    pub fn basis_id(&self) -> BasisId {
        self.basis_id
    }

    pub fn mode(&self) -> FpcaMode {
        self.mode
    }

    /// Number of eigenpairs retained after flooring.
    pub fn retained_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `M × K_max`; columns are eigenfunctions in basis coordinates.
    pub fn eigenfunction_coeffs(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    /// `W C`: column `k` maps coefficients `b` to `⟨f, ψ_k⟩ = b' W c_k`.
    pub fn projection_matrix(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn eigenfunction(&self, k: usize) -> FunctionalDatum {
        FunctionalDatum::new(self.basis_id, self.eigenfunctions.column(k).into_owned())
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn class_means(&self) -> &[FunctionalDatum] {
        &self.class_means
    }

    pub fn mean(&self, center: Center) -> Result<&FunctionalDatum> {
        match (center, self.mode) {
            (Center::Global, _) => Ok(&self.overall_mean),
            (Center::Class(_), FpcaMode::Global) => Err(FdaError::InvalidConfiguration(
                "a global model carries no class means".into(),
            )),
            (Center::Class(g), FpcaMode::PerClass(own)) if g != own => Err(FdaError::InvalidConfiguration(
                format!("model for class {own} cannot center at class {g}"),
            )),
            (Center::Class(g), _) => self.class_means.get(g).ok_or_else(|| {
                FdaError::InvalidConfiguration(format!("no class {g} in model"))
            }),
        }
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k > self.retained_count() {
            return Err(FdaError::KOutOfRange { requested: k, available: self.retained_count() });
        }
        Ok(())
    }

    /// `⟨f, ψ_k⟩` for `k < K`, without centering.
    pub fn project(&self, f: &FunctionalDatum, k: usize) -> Result<Vec<f64>> {
        if f.basis_id() != self.basis_id || f.len() != self.projection.nrows() {
            return Err(FdaError::BasisMismatch);
        }
        self.check_k(k)?;
        Ok((0..k).map(|j| self.projection.column(j).dot(f.coeffs())).collect())
    }

    /// Functional principal component scores `θ_k = ⟨f − μ_center, ψ_k⟩`.
    pub fn scores(&self, f: &FunctionalDatum, center: Center, k: usize) -> Result<Vec<f64>> {
        let mean = self.mean(center)?;
        let centered = f.sub(mean)?;
        self.project(&centered, k)
    }

    /// Standardized scores `ω_k = θ_k / λ_k^{1/2}`.
    pub fn standardized_scores(&self, f: &FunctionalDatum, center: Center, k: usize) -> Result<Vec<f64>> {
        let mut s = self.scores(f, center, k)?;
        for (v, l) in s.iter_mut().zip(&self.eigenvalues) {
            *v /= l.sqrt();
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn basis() -> BasisSystem {
        BasisSystem::bspline(0.0, 1.0, 4, 12).unwrap()
    }

    fn datum(basis: &BasisSystem, seed: u64) -> FunctionalDatum {
        // deterministic pseudo-random coefficients
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let coeffs = (0..basis.num_basis())
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        basis.datum(DVector::from_vec(coeffs)).unwrap()
    }

    #[test]
    fn mean_of_single_and_symmetric_pair() {
        let b = basis();
        let f = datum(&b, 3);
        assert_eq!(sample_mean(std::slice::from_ref(&f)).unwrap(), f);
        let m = sample_mean(&[f.clone(), f.scale(-1.0)]).unwrap();
        assert!(m.coeffs().iter().all(|c| *c == 0.0));
        assert_eq!(sample_mean(&[]), Err(FdaError::EmptySample));
    }

    #[test]
    fn identical_curves_give_zero_operator() {
        let b = basis();
        let f = datum(&b, 1);
        let model = fit_global(&b, &vec![f; 10]).unwrap();
        assert_eq!(model.retained_count(), 0);
        assert!(matches!(
            model.scores(&datum(&b, 2), Center::Global, 1),
            Err(FdaError::KOutOfRange { requested: 1, available: 0 })
        ));
    }

    #[test]
    fn rank_one_construction() {
        let b = basis();
        let mu = datum(&b, 7);
        let phi = b.unit(3);
        let psi = phi.scale(1.0 / b.norm(&phi).unwrap());
        let data: Vec<_> = (0..20)
            .map(|i| mu.axpy(if i % 2 == 0 { 1.0 } else { -1.0 }, &psi).unwrap())
            .collect();
        let model = fit_global(&b, &data).unwrap();
        assert_eq!(model.retained_count(), 1);
        assert_abs_diff_eq!(model.eigenvalues()[0], 1.0, epsilon = 1e-6);
        let est = model.eigenfunction(0);
        let sign = est.coeffs().dot(psi.coeffs()).signum();
        for (a, e) in psi.coeffs().iter().zip(est.coeffs().iter()) {
            assert_abs_diff_eq!(*a, sign * e, epsilon = 1e-6);
        }
    }

    #[test]
    fn scores_of_mean_and_eigen_offsets() {
        let b = basis();
        let data: Vec<_> = (0..40).map(|i| datum(&b, i)).collect();
        let model = fit_global(&b, &data).unwrap();
        let k = model.retained_count();
        assert_eq!(k, 12);
        let mu = model.mean(Center::Global).unwrap().clone();
        assert!(model.scores(&mu, Center::Global, k).unwrap().iter().all(|s| s.abs() < 1e-12));

        let f = mu.axpy(2.0, &model.eigenfunction(0)).unwrap();
        let s = model.scores(&f, Center::Global, k).unwrap();
        assert_abs_diff_eq!(s[0], 2.0, epsilon = 1e-8);
        assert!(s[1..].iter().all(|v| v.abs() < 1e-8));

        let l1 = model.eigenvalues()[0];
        let f = mu.axpy(l1.sqrt(), &model.eigenfunction(0)).unwrap();
        let w = model.standardized_scores(&f, Center::Global, 3).unwrap();
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn retained_count_capped_by_sample_size() {
        let b = basis();
        let data: Vec<_> = (0..5).map(|i| datum(&b, i)).collect();
        let model = fit_global(&b, &data).unwrap();
        assert!(model.retained_count() <= 4);
        for w in model.eigenvalues().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn insufficient_samples() {
        let b = basis();
        assert!(matches!(fit_global(&b, &[datum(&b, 1)]), Err(FdaError::InsufficientData(_))));
        let s = LabeledSample::new(vec![datum(&b, 1), datum(&b, 2), datum(&b, 3)], vec![0, 1, 1], 2).unwrap();
        assert!(matches!(fit_per_class(&b, &s), Err(FdaError::InsufficientData(_))));
        assert!(fit_pooled(&b, &s).is_ok());
        let s2 = LabeledSample::new(vec![datum(&b, 1), datum(&b, 2)], vec![0, 1], 2).unwrap();
        assert!(matches!(fit_pooled(&b, &s2), Err(FdaError::InsufficientData(_))));
    }

    #[test]
    fn pooled_with_single_class_matches_global() {
        let b = basis();
        let data: Vec<_> = (0..30).map(|i| datum(&b, i)).collect();
        let s = LabeledSample::new(data.clone(), vec![0; 30], 1).unwrap();
        let g = fit_global(&b, &data).unwrap();
        let p = fit_pooled(&b, &s).unwrap();
        assert_eq!(g.eigenvalues(), p.eigenvalues());
        assert_eq!(g.eigenfunction_coeffs(), p.eigenfunction_coeffs());
    }

    #[test]
    fn center_validity() {
        let b = basis();
        let data: Vec<_> = (0..12).map(|i| datum(&b, i)).collect();
        let labels = (0..12).map(|i| i % 2).collect();
        let s = LabeledSample::new(data.clone(), labels, 2).unwrap();
        let per = fit_per_class(&b, &s).unwrap();
        assert!(per[0].mean(Center::Class(0)).is_ok());
        assert!(per[0].mean(Center::Class(1)).is_err());
        let g = fit_global(&b, &data).unwrap();
        assert!(g.mean(Center::Class(0)).is_err());
    }

    #[test]
    fn labeled_sample_validation() {
        let b = basis();
        let d = vec![datum(&b, 1), datum(&b, 2)];
        assert!(LabeledSample::new(d.clone(), vec![0], 1).is_err());
        assert!(LabeledSample::new(d.clone(), vec![0, 2], 2).is_err());
        assert!(matches!(LabeledSample::new(d.clone(), vec![0, 0], 2), Err(FdaError::InsufficientData(_))));
        let other = BasisSystem::bspline(0.0, 1.0, 4, 13).unwrap();
        assert_eq!(
            LabeledSample::new(vec![datum(&b, 1), other.zero()], vec![0, 0], 1).unwrap_err(),
            FdaError::BasisMismatch
        );
    }
}
