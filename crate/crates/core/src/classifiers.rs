//! Classification rules for functional data.
//!
//! Training fixes everything that does not depend on hyperparameters (class
//! means, covariance models, curve embeddings) in a [`FittedState`]. The state
//! can then label a curve at one hyperparameter setting or at a whole grid of
//! truncations and neighbour counts at once, which is what cross-validation
//! uses.
//!
//! Score-based semi-distances are evaluated on uncentered projections
//! `⟨f, ψ_k⟩`: the class-mean centering subtracts the same constant from both
//! curves being compared and cancels in every difference.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, FunctionalDatum};
use crate::distances::{dh_direction, DenseGrid, DistanceKind, ModelSet};
use crate::error::{FdaError, Result};
use crate::fpca::{fit_per_class, fit_pooled, sample_mean, LabeledSample};

/// Ridge added to coefficient covariances, relative to `trace(C) / M`.
pub const COEF_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "kNN")]
    Knn,
    #[serde(rename = "Centroid")]
    Centroid,
    #[serde(rename = "FLBCR")]
    Flbcr,
    #[serde(rename = "FQBCR")]
    Fqbcr,
    #[serde(rename = "LBCR_Coef")]
    LbcrCoef,
    #[serde(rename = "QBCR_Coef")]
    QbcrCoef,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Knn => "kNN",
            Method::Centroid => "Centroid",
            Method::Flbcr => "FLBCR",
            Method::Fqbcr => "FQBCR",
            Method::LbcrCoef => "LBCR_Coef",
            Method::QbcrCoef => "QBCR_Coef",
        }
    }

    /// Whether the method is parameterized by a distance kind.
    pub fn takes_distance(self) -> bool {
        matches!(self, Method::Knn | Method::Centroid)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = FdaError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Ok(match norm.as_str() {
            "knn" => Method::Knn,
            "centroid" => Method::Centroid,
            "flbcr" => Method::Flbcr,
            "fqbcr" => Method::Fqbcr,
            "lbcr_coef" | "lbcr" => Method::LbcrCoef,
            "qbcr_coef" | "qbcr" => Method::QbcrCoef,
            _ => return Err(FdaError::InvalidConfiguration(format!("unknown method {s:?}"))),
        })
    }
}

/// A method, with its distance kind when it takes one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MethodSpec {
    pub method: Method,
    pub distance: Option<DistanceKind>,
}

impl MethodSpec {
    pub fn new(method: Method, distance: Option<DistanceKind>) -> Result<Self> {
        match (method.takes_distance(), distance) {
            (true, None) => {
                return Err(FdaError::InvalidConfiguration(format!("{method} needs a distance kind")))
            }
            (false, Some(d)) => {
                return Err(FdaError::InvalidConfiguration(format!("{method} takes no distance (got {d})")))
            }
            _ => {}
        }
        if method == Method::Knn && distance == Some(DistanceKind::Dh) {
            return Err(FdaError::InvalidConfiguration("DH is a centroid-only distance".into()));
        }
        Ok(Self { method, distance })
    }

    pub fn knn(kind: DistanceKind) -> Self {
        Self::new(Method::Knn, Some(kind)).expect("valid kNN kind")
    }

    pub fn centroid(kind: DistanceKind) -> Self {
        Self { method: Method::Centroid, distance: Some(kind) }
    }

    pub fn plain(method: Method) -> Self {
        Self::new(method, None).expect("method without distance")
    }

    /// Whether a truncation (number of components) must be chosen.
    pub fn uses_truncation(&self) -> bool {
        match self.method {
            Method::Flbcr | Method::Fqbcr => true,
            Method::Knn | Method::Centroid => self.distance.is_some_and(DistanceKind::uses_truncation),
            Method::LbcrCoef | Method::QbcrCoef => false,
        }
    }

    pub fn uses_neighbors(&self) -> bool {
        self.method == Method::Knn
    }

    /// The paper-style table of methods: kNN with seven kinds, centroid with
    /// eight, and the four Bayes rules.
    pub fn full_table() -> Vec<MethodSpec> {
        let mut v = Vec::new();
        for kind in DistanceKind::ALL {
            if kind != DistanceKind::Dh {
                v.push(MethodSpec::knn(kind));
            }
        }
        for kind in DistanceKind::ALL {
            v.push(MethodSpec::centroid(kind));
        }
        for m in [Method::Flbcr, Method::Fqbcr, Method::LbcrCoef, Method::QbcrCoef] {
            v.push(MethodSpec::plain(m));
        }
        v
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.distance {
            Some(d) => write!(f, "{}/{}", self.method, d),
            None => write!(f, "{}", self.method),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = FdaError;

    /// `"knn/fm_c"`, `"centroid:DH"`, `"flbcr"`, ...
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.splitn(2, ['/', ':']);
        let method: Method = parts.next().unwrap_or("").parse()?;
        let distance = parts.next().map(str::parse).transpose()?;
        MethodSpec::new(method, distance)
    }
}

/// Hyperparameters chosen by cross-validation or given explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub truncation: Option<usize>,
    pub k_neighbors: Option<usize>,
}

/// How a curve is turned into a feature vector.
#[derive(Debug, Clone)]
enum Embedding {
    /// `W^{1/2} b`: Euclidean distance equals the L² distance.
    L2(DMatrix<f64>),
    L1(DenseGrid),
    Linf(DenseGrid),
    /// Rows are (optionally standardized) projections on the eigenfunctions
    /// of one model each.
    Scores { maps: Vec<DMatrix<f64>>, per_class: bool },
}

impl Embedding {
    fn for_kind(basis: &BasisSystem, kind: DistanceKind, models: Option<&ModelSet>) -> Result<Self> {
        Ok(match kind {
            DistanceKind::L1 => Embedding::L1(DenseGrid::new(basis)?),
            DistanceKind::Linf => Embedding::Linf(DenseGrid::new(basis)?),
            DistanceKind::L2 => Embedding::L2(basis.gram_sqrt()?.clone()),
            _ => Embedding::scores(models.expect("score kinds carry models"), kind.standardized()),
        })
    }

    fn scores(models: &ModelSet, standardize: bool) -> Self {
        let kmax = models.min_retained();
        let make = |m: &crate::fpca::FpcaModel| {
            let p = m.projection_matrix().columns(0, kmax).transpose();
            if standardize {
                let mut p = p;
                for (k, mut row) in p.row_iter_mut().enumerate() {
                    row /= m.eigenvalues()[k].sqrt();
                }
                p
            } else {
                p
            }
        };
        match models {
            ModelSet::Common(m) => Embedding::Scores { maps: vec![make(m)], per_class: false },
            ModelSet::PerClass(ms) => Embedding::Scores { maps: ms.iter().map(make).collect(), per_class: true },
        }
    }

    fn model_count(&self) -> usize {
        match self {
            Embedding::Scores { maps, .. } => maps.len(),
            _ => 1,
        }
    }

    fn model_index(&self, class: usize) -> usize {
        match self {
            Embedding::Scores { per_class: true, .. } => class,
            _ => 0,
        }
    }

    fn features(&self, f: &FunctionalDatum, model: usize) -> Result<Vec<f64>> {
        match self {
            Embedding::L2(s) => {
                if f.len() != s.ncols() {
                    return Err(FdaError::BasisMismatch);
                }
                Ok((s * f.coeffs()).iter().copied().collect())
            }
            Embedding::L1(g) | Embedding::Linf(g) => g.values(f),
            Embedding::Scores { maps, .. } => {
                let map = &maps[model];
                if f.len() != map.ncols() {
                    return Err(FdaError::BasisMismatch);
                }
                Ok((map * f.coeffs()).iter().copied().collect())
            }
        }
    }

    /// Features of `f` under every model.
    fn all_features(&self, f: &FunctionalDatum) -> Result<Vec<Vec<f64>>> {
        (0..self.model_count()).map(|m| self.features(f, m)).collect()
    }

    /// Distance (or a monotone transform of it) for embeddings without a
    /// truncation.
    fn plain_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Embedding::L2(_) => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>(),
            Embedding::L1(g) => g.l1_from_values(a, b),
            Embedding::Linf(_) => DenseGrid::linf_from_values(a, b),
            Embedding::Scores { .. } => unreachable!("score embeddings are truncated"),
        }
    }

    fn is_scores(&self) -> bool {
        matches!(self, Embedding::Scores { .. })
    }
}

#[derive(Debug, Clone)]
enum Rule {
    Knn {
        embedding: Embedding,
        labels: Vec<usize>,
        features: Vec<Vec<f64>>,
    },
    Centroid {
        embedding: Embedding,
        /// Per class, the class mean's features under that class's model.
        centroids: Vec<Vec<f64>>,
        dh_direction: Option<Vec<f64>>,
        /// Per class, cumulative sums of log eigenvalues (quadratic rule).
        log_eigen: Option<Vec<Vec<f64>>>,
        prior_term: bool,
    },
    Gaussian {
        means: Vec<DVector<f64>>,
        factors: Vec<Cholesky<f64, Dyn>>,
        log_dets: Vec<f64>,
    },
}

/// Hyperparameter-free training state of one method.
#[derive(Debug, Clone)]
pub struct FittedState {
    spec: MethodSpec,
    num_classes: usize,
    train_size: usize,
    priors: Vec<f64>,
    max_truncation: usize,
    models: Option<ModelSet>,
    rule: Rule,
}

fn check_priors(priors: &[f64], classes: usize) -> Result<()> {
    if priors.len() != classes {
        return Err(FdaError::InvalidPriors(format!("{} priors for {classes} classes", priors.len())));
    }
    if let Some(p) = priors.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(FdaError::InvalidPriors(format!("prior {p} is not positive")));
    }
    let sum: f64 = priors.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(FdaError::InvalidPriors(format!("priors sum to {sum}")));
    }
    Ok(())
}

impl FittedState {
    /// Fit with priors equal to the training class proportions.
    pub fn fit(basis: &BasisSystem, sample: &LabeledSample, spec: MethodSpec) -> Result<Self> {
        Self::fit_with_priors(basis, sample, spec, &sample.proportions())
    }

    pub fn fit_with_priors(
        basis: &BasisSystem,
        sample: &LabeledSample,
        spec: MethodSpec,
        priors: &[f64],
    ) -> Result<Self> {
        let g = sample.num_classes();
        check_priors(priors, g)?;
        if sample.basis_id() != basis.id() {
            return Err(FdaError::BasisMismatch);
        }
        if spec.distance == Some(DistanceKind::Dh) && g != 2 {
            return Err(FdaError::TwoClassOnly { classes: g });
        }

        let needs_common = matches!(spec.method, Method::Flbcr)
            || matches!(spec.distance, Some(DistanceKind::FpcC | DistanceKind::FmC | DistanceKind::Dh));
        let needs_per_class = matches!(spec.method, Method::Fqbcr)
            || matches!(spec.distance, Some(DistanceKind::FpcD | DistanceKind::FmD));
        let models = if needs_common {
            Some(ModelSet::Common(fit_pooled(basis, sample)?))
        } else if needs_per_class {
            Some(ModelSet::PerClass(fit_per_class(basis, sample)?))
        } else {
            None
        };
        let max_truncation = models.as_ref().map_or(0, ModelSet::min_retained);

        let rule = match spec.method {
            Method::Knn => {
                let kind = spec.distance.expect("kNN has a distance");
                let embedding = Embedding::for_kind(basis, kind, models.as_ref())?;
                let features = sample
                    .data()
                    .iter()
                    .zip(sample.labels())
                    .map(|(f, &l)| embedding.features(f, embedding.model_index(l)))
                    .collect::<Result<Vec<_>>>()?;
                Rule::Knn { embedding, labels: sample.labels().to_vec(), features }
            }
            Method::Centroid | Method::Flbcr | Method::Fqbcr => {
                let embedding = match spec.method {
                    Method::Centroid => {
                        Embedding::for_kind(basis, spec.distance.expect("centroid distance"), models.as_ref())?
                    }
                    _ => Embedding::scores(models.as_ref().expect("Bayes rules carry models"), true),
                };
                let means = match &models {
                    Some(m) => m.for_class(0)?.class_means().to_vec(),
                    None => (0..g)
                        .map(|c| {
                            let members: Vec<_> =
                                sample.class_indices(c).into_iter().map(|i| sample.data()[i].clone()).collect();
                            sample_mean(&members)
                        })
                        .collect::<Result<Vec<_>>>()?,
                };
                let centroids = means
                    .iter()
                    .enumerate()
                    .map(|(c, mu)| embedding.features(mu, embedding.model_index(c)))
                    .collect::<Result<Vec<_>>>()?;
                let dh = match spec.distance {
                    Some(DistanceKind::Dh) => match &models {
                        Some(ModelSet::Common(m)) => Some(dh_direction(m, max_truncation)?),
                        _ => unreachable!("DH uses a common model"),
                    },
                    _ => None,
                };
                let log_eigen = match (spec.method, &models) {
                    (Method::Fqbcr, Some(ModelSet::PerClass(ms))) => Some(
                        ms.iter()
                            .map(|m| {
                                m.eigenvalues()
                                    .iter()
                                    .scan(0.0, |acc, l| {
                                        *acc += l.ln();
                                        Some(*acc)
                                    })
                                    .collect()
                            })
                            .collect(),
                    ),
                    _ => None,
                };
                Rule::Centroid {
                    embedding,
                    centroids,
                    dh_direction: dh,
                    log_eigen,
                    prior_term: matches!(spec.method, Method::Flbcr | Method::Fqbcr),
                }
            }
            Method::LbcrCoef | Method::QbcrCoef => fit_gaussian(sample, spec.method == Method::QbcrCoef)?,
        };

        Ok(Self {
            spec,
            num_classes: g,
            train_size: sample.len(),
            priors: priors.to_vec(),
            max_truncation,
            models,
            rule,
        })
    }

    pub fn spec(&self) -> MethodSpec {
        self.spec
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn train_size(&self) -> usize {
        self.train_size
    }

    /// Largest truncation every fitted model supports (0 without models).
    pub fn max_truncation(&self) -> usize {
        self.max_truncation
    }

    pub fn models(&self) -> Option<&ModelSet> {
        self.models.as_ref()
    }

    fn equal_priors(&self) -> bool {
        self.priors.windows(2).all(|w| w[0] == w[1])
    }

    /// Check a hyperparameter setting against the fitted state.
    pub fn validate(&self, hyper: &Hyperparameters) -> Result<()> {
        if self.spec.uses_truncation() {
            let t = hyper.truncation.ok_or_else(|| {
                FdaError::InvalidConfiguration(format!("{} needs a truncation", self.spec))
            })?;
            if t == 0 || t > self.max_truncation {
                return Err(FdaError::KOutOfRange { requested: t, available: self.max_truncation });
            }
        }
        if self.spec.uses_neighbors() {
            let k = hyper.k_neighbors.ok_or_else(|| {
                FdaError::InvalidConfiguration("kNN needs a neighbour count".into())
            })?;
            if k == 0 || k > self.train_size {
                return Err(FdaError::InvalidK { k, n: self.train_size });
            }
        }
        Ok(())
    }

    /// Labels of `f0` over a grid: `result[t][j]` is the label at truncation
    /// `t + 1` (a single row for methods without truncation) and neighbour
    /// count `neighbors[j]` (a single column for methods other than kNN).
    pub fn predict_grid(&self, f0: &FunctionalDatum, max_truncation: usize, neighbors: &[usize]) -> Result<Vec<Vec<usize>>> {
        let rows = if self.spec.uses_truncation() {
            if max_truncation == 0 || max_truncation > self.max_truncation {
                return Err(FdaError::KOutOfRange { requested: max_truncation, available: self.max_truncation });
            }
            max_truncation
        } else {
            1
        };
        if self.spec.uses_neighbors() {
            if neighbors.is_empty() {
                return Err(FdaError::InvalidConfiguration("empty neighbour grid".into()));
            }
            if let Some(&k) = neighbors.iter().find(|&&k| k == 0 || k > self.train_size) {
                return Err(FdaError::InvalidK { k, n: self.train_size });
            }
        }
        match &self.rule {
            Rule::Knn { embedding, labels, features } => {
                let query = embedding.all_features(f0)?;
                let n = labels.len();
                let mut order: Vec<usize> = (0..n).collect();
                let mut out = Vec::with_capacity(rows);
                if embedding.is_scores() {
                    let mut dist2 = vec![0.0; n];
                    for t in 0..rows {
                        for i in 0..n {
                            let q = &query[embedding.model_index(labels[i])];
                            let d = q[t] - features[i][t];
                            dist2[i] += d * d;
                        }
                        out.push(knn_votes(&dist2, labels, &mut order, neighbors, self.num_classes));
                    }
                } else {
                    let dist: Vec<f64> = features.iter().map(|x| embedding.plain_distance(&query[0], x)).collect();
                    out.push(knn_votes(&dist, labels, &mut order, neighbors, self.num_classes));
                }
                Ok(out)
            }
            Rule::Centroid { embedding, centroids, dh_direction, log_eigen, prior_term } => {
                let query = embedding.all_features(f0)?;
                let prior_shift: Vec<f64> = if *prior_term && !self.equal_priors() {
                    self.priors.iter().map(|p| -2.0 * p.ln()).collect()
                } else {
                    // a shift common to all classes never changes the argmin
                    vec![0.0; self.num_classes]
                };
                if !embedding.is_scores() {
                    let crit: Vec<f64> = (0..self.num_classes)
                        .map(|g| embedding.plain_distance(&query[0], &centroids[g]))
                        .collect();
                    return Ok(vec![vec![argmin(&crit)]]);
                }
                let mut acc = vec![0.0; self.num_classes];
                let mut out = Vec::with_capacity(rows);
                for t in 0..rows {
                    let crit: Vec<f64> = (0..self.num_classes)
                        .map(|g| {
                            let q = &query[embedding.model_index(g)];
                            let d = q[t] - centroids[g][t];
                            match dh_direction {
                                Some(delta) => {
                                    acc[g] += d * delta[t];
                                    acc[g].abs()
                                }
                                None => {
                                    acc[g] += d * d;
                                    let log_det = log_eigen.as_ref().map_or(0.0, |le| le[g][t]);
                                    acc[g] + log_det + prior_shift[g]
                                }
                            }
                        })
                        .collect();
                    out.push(argmin(&crit));
                }
                Ok(out.into_iter().map(|l| vec![l]).collect())
            }
            Rule::Gaussian { means, factors, log_dets } => {
                let prior_shift: Vec<f64> = if self.equal_priors() {
                    vec![0.0; self.num_classes]
                } else {
                    self.priors.iter().map(|p| -2.0 * p.ln()).collect()
                };
                let crit: Vec<f64> = (0..self.num_classes)
                    .map(|g| {
                        let diff = f0.coeffs() - &means[g];
                        let factor = &factors[g.min(factors.len() - 1)];
                        let z = factor.l().solve_lower_triangular(&diff).expect("non-singular factor");
                        z.norm_squared() + log_dets[g] + prior_shift[g]
                    })
                    .collect();
                Ok(vec![vec![argmin(&crit)]])
            }
        }
    }
}

/// Lowest index among the minima.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn knn_votes(dist: &[f64], labels: &[usize], order: &mut [usize], neighbors: &[usize], classes: usize) -> Vec<usize> {
    order.sort_unstable_by(|&a, &b| {
        dist[a].total_cmp(&dist[b]).then(labels[a].cmp(&labels[b])).then(a.cmp(&b))
    });
    let ranked: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    neighbors.iter().map(|&k| majority_vote(&ranked, k, classes)).collect()
}

/// Majority among the first `k` ranked labels; a tied vote is retried with
/// `k - 1` neighbours.
pub fn majority_vote(ranked_labels: &[usize], k: usize, classes: usize) -> usize {
    let mut counts = vec![0usize; classes];
    for &l in &ranked_labels[..k] {
        counts[l] += 1;
    }
    let mut k = k;
    loop {
        let top = *counts.iter().max().expect("at least one class");
        let mut winners = counts.iter().enumerate().filter(|(_, &c)| c == top).map(|(g, _)| g);
        let first = winners.next().expect("a winner exists");
        if winners.next().is_none() || k == 1 {
            return first;
        }
        k -= 1;
        counts[ranked_labels[k]] -= 1;
    }
}

fn fit_gaussian(sample: &LabeledSample, quadratic: bool) -> Result<Rule> {
    let g = sample.num_classes();
    let m = sample.data()[0].len();
    let means: Vec<DVector<f64>> = (0..g)
        .map(|c| {
            let members: Vec<_> = sample.class_indices(c).into_iter().map(|i| sample.data()[i].clone()).collect();
            sample_mean(&members).map(FunctionalDatum::into_coeffs)
        })
        .collect::<Result<_>>()?;
    let scatter = |class: Option<usize>| {
        let mut s = DMatrix::<f64>::zeros(m, m);
        let mut count = 0usize;
        for (f, &l) in sample.data().iter().zip(sample.labels()) {
            if class.is_none_or(|c| c == l) {
                let r = f.coeffs() - &means[l];
                s.ger(1.0, &r, &r, 1.0);
                count += 1;
            }
        }
        s / count as f64
    };
    let regularize = |mut c: DMatrix<f64>, class: usize| -> Result<(Cholesky<f64, Dyn>, f64)> {
        let ridge = COEF_RIDGE * c.trace() / m as f64;
        for i in 0..m {
            c[(i, i)] += ridge;
        }
        let chol = Cholesky::new(c).ok_or(FdaError::DegenerateCovariance { class })?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(FdaError::DegenerateCovariance { class });
        }
        Ok((chol, log_det))
    };
    if quadratic {
        let counts = sample.class_counts();
        if let Some(c) = counts.iter().position(|&n| n < 2) {
            return Err(FdaError::InsufficientData(format!("class {c} has fewer than 2 curves")));
        }
        let mut factors = Vec::with_capacity(g);
        let mut log_dets = Vec::with_capacity(g);
        for c in 0..g {
            let (f, ld) = regularize(scatter(Some(c)), c)?;
            factors.push(f);
            log_dets.push(ld);
        }
        Ok(Rule::Gaussian { means, factors, log_dets })
    } else {
        let (f, _) = regularize(scatter(None), 0)?;
        Ok(Rule::Gaussian { means, factors: vec![f], log_dets: vec![0.0; g] })
    }
}

/// A classifier with fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    state: FittedState,
    hyper: Hyperparameters,
}

impl TrainedClassifier {
    pub fn train(basis: &BasisSystem, sample: &LabeledSample, spec: MethodSpec, hyper: Hyperparameters) -> Result<Self> {
        Self::from_state(FittedState::fit(basis, sample, spec)?, hyper)
    }

    pub fn train_with_priors(
        basis: &BasisSystem,
        sample: &LabeledSample,
        spec: MethodSpec,
        hyper: Hyperparameters,
        priors: &[f64],
    ) -> Result<Self> {
        Self::from_state(FittedState::fit_with_priors(basis, sample, spec, priors)?, hyper)
    }

    pub fn from_state(state: FittedState, hyper: Hyperparameters) -> Result<Self> {
        state.validate(&hyper)?;
        let hyper = Hyperparameters {
            truncation: hyper.truncation.filter(|_| state.spec.uses_truncation()),
            k_neighbors: hyper.k_neighbors.filter(|_| state.spec.uses_neighbors()),
        };
        Ok(Self { state, hyper })
    }

    pub fn spec(&self) -> MethodSpec {
        self.state.spec
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        self.hyper
    }

    pub fn state(&self) -> &FittedState {
        &self.state
    }

    pub fn priors(&self) -> &[f64] {
        &self.state.priors
    }

    pub fn classify(&self, f0: &FunctionalDatum) -> Result<usize> {
        let t = self.hyper.truncation.unwrap_or(1);
        let k: Vec<usize> = self.hyper.k_neighbors.into_iter().collect();
        let grid = self.state.predict_grid(f0, t, &k)?;
        Ok(*grid.last().and_then(|row| row.first()).expect("non-empty prediction grid"))
    }

    /// Labels a batch in parallel; output order follows input order.
    pub fn classify_batch(&self, data: &[FunctionalDatum]) -> Result<Vec<usize>> {
        data.par_iter().map(|f| self.classify(f)).collect()
    }
}

fn require(c: &TrainedClassifier, allowed: &[Method]) -> Result<()> {
    if allowed.contains(&c.spec().method) {
        Ok(())
    } else {
        Err(FdaError::InvalidConfiguration(format!("classifier is {}, expected {:?}", c.spec(), allowed)))
    }
}

/// k-nearest-neighbour vote.
pub fn knn_classify(c: &TrainedClassifier, f0: &FunctionalDatum) -> Result<usize> {
    require(c, &[Method::Knn])?;
    c.classify(f0)
}

/// Closest class mean.
pub fn centroid_classify(c: &TrainedClassifier, f0: &FunctionalDatum) -> Result<usize> {
    require(c, &[Method::Centroid])?;
    c.classify(f0)
}

/// Functional linear Bayes rule: `d_FM(f0, μ_g)² − 2 log π_g` under the pooled model.
pub fn flbcr_classify(c: &TrainedClassifier, f0: &FunctionalDatum) -> Result<usize> {
    require(c, &[Method::Flbcr])?;
    c.classify(f0)
}

/// Functional quadratic Bayes rule: `d_FM,g(f0, μ_g)² + Σ_k log λ_gk − 2 log π_g`.
pub fn fqbcr_classify(c: &TrainedClassifier, f0: &FunctionalDatum) -> Result<usize> {
    require(c, &[Method::Fqbcr])?;
    c.classify(f0)
}

/// Gaussian discriminant rules on the basis coefficients.
pub fn coef_bayes_classify(c: &TrainedClassifier, f0: &FunctionalDatum) -> Result<usize> {
    require(c, &[Method::LbcrCoef, Method::QbcrCoef])?;
    c.classify(f0)
}
