//! Two-class Monte Carlo scenarios built from truncated Karhunen–Loève sums.
//!
//! Both classes live on [0, 1] with means `μ_1(t) = 20 t^1.1 (1 − t)` and
//! `μ_2(t) = 20 t (1 − t)^1.1`, eigenfunctions `ψ_k(t) = √2 sin((k − ½)πt)`
//! and eigenvalues `λ_k = 1 / ((k − ½)π)²`. Scenarios 2 and 4 double the
//! second class's eigenvalues; scenarios 3 and 4 replace Gaussian scores by
//! centered, scaled exponential ones. Curves are observed on an equispaced
//! grid with additive Gaussian noise.

use std::f64::consts::{PI, SQRT_2};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, FunctionalDatum};
use crate::classifiers::MethodSpec;
use crate::error::{FdaError, Result};
use crate::experiment::{evaluate_methods, run_replications, tuning_seed, ExperimentResults};
use crate::fpca::LabeledSample;
use crate::quadrature::uniform_grid;
use crate::rng::stream_rng;
use crate::tuning::TuningGrid;

/// Spline order used to smooth simulated curves.
pub const SIM_BASIS_ORDER: usize = 6;
/// Number of basis functions used to smooth simulated curves.
pub const SIM_BASIS_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreLaw {
    Gaussian,
    /// `θ_k = λ_k^{1/2} (E_k − 1)` with `E_k ~ Exp(1)`.
    StandardizedExponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario_id: u8,
    /// Multiplier of the base eigenvalues, per class.
    pub eigenvalue_scale: [f64; 2],
    pub score_law: ScoreLaw,
    pub kl_truncation: usize,
    pub grid_size: usize,
    pub noise_variance: f64,
    /// Curves per class.
    pub class_sizes: [usize; 2],
    /// Training curves per class; the rest form the test sample.
    pub train_sizes: [usize; 2],
}

impl ScenarioConfig {
    /// Scenario `id ∈ 1..=4` with total size `n` (split evenly between the
    /// classes) observed on `grid_size` points. For `n = 200` and `n = 300`
    /// the training sizes are 75 and 120 per class; otherwise three quarters
    /// of each class.
    pub fn scenario(id: u8, n: usize, grid_size: usize) -> Result<Self> {
        let (scale, law) = match id {
            1 => ([1.0, 1.0], ScoreLaw::Gaussian),
            2 => ([1.0, 2.0], ScoreLaw::Gaussian),
            3 => ([1.0, 1.0], ScoreLaw::StandardizedExponential),
            4 => ([1.0, 2.0], ScoreLaw::StandardizedExponential),
            _ => return Err(FdaError::InvalidConfiguration(format!("scenario must be 1..=4, got {id}"))),
        };
        if n < 4 || !n.is_multiple_of(2) {
            return Err(FdaError::InvalidConfiguration(format!("sample size {n} must be even and at least 4")));
        }
        let per_class = n / 2;
        let train = match n {
            200 => 75,
            300 => 120,
            _ => (3 * per_class / 4).max(2),
        };
        let cfg = Self {
            scenario_id: id,
            eigenvalue_scale: scale,
            score_law: law,
            kl_truncation: 50,
            grid_size,
            noise_variance: 0.01,
            class_sizes: [per_class, per_class],
            train_sizes: [train, train],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(FdaError::InvalidConfiguration("grid needs at least 2 points".into()));
        }
        if !self.noise_variance.is_finite() || self.noise_variance < 0.0 {
            return Err(FdaError::InvalidConfiguration("noise variance must be finite and non-negative".into()));
        }
        if self.eigenvalue_scale.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(FdaError::InvalidConfiguration("eigenvalue scales must be positive".into()));
        }
        for g in 0..2 {
            if self.train_sizes[g] > self.class_sizes[g] {
                return Err(FdaError::InvalidConfiguration(format!(
                    "class {} has {} curves but {} training curves requested",
                    g + 1,
                    self.class_sizes[g],
                    self.train_sizes[g]
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(0.0, 1.0, self.grid_size)
    }

    /// Eigenvalue `λ_{g,k}` for class `g ∈ {0, 1}` and `k ≥ 1`.
    pub fn eigenvalue(&self, class: usize, k: usize) -> f64 {
        self.eigenvalue_scale[class] * base_eigenvalue(k)
    }
}

/// `1 / ((k − ½)π)²`.
pub fn base_eigenvalue(k: usize) -> f64 {
    let x = (k as f64 - 0.5) * PI;
    1.0 / (x * x)
}

/// `√2 sin((k − ½)πt)`.
pub fn eigenfunction(k: usize, t: f64) -> f64 {
    SQRT_2 * ((k as f64 - 0.5) * PI * t).sin()
}

/// Class mean (`class ∈ {0, 1}`).
pub fn class_mean(class: usize, t: f64) -> f64 {
    match class {
        0 => 20.0 * t.powf(1.1) * (1.0 - t),
        _ => 20.0 * t * (1.0 - t).powf(1.1),
    }
}

/// Karhunen–Loève scores `θ_1..θ_K` for one curve of class `class`.
pub fn draw_scores<R: Rng + ?Sized>(cfg: &ScenarioConfig, class: usize, rng: &mut R) -> Vec<f64> {
    (1..=cfg.kl_truncation)
        .map(|k| {
            let sd = cfg.eigenvalue(class, k).sqrt();
            let z: f64 = match cfg.score_law {
                ScoreLaw::Gaussian => StandardNormal.sample(rng),
                ScoreLaw::StandardizedExponential => {
                    let e: f64 = Exp1.sample(rng);
                    e - 1.0
                }
            };
            sd * z
        })
        .collect()
}

/// Raw discretized curves with labels and a train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub grid: Vec<f64>,
    pub curves: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn generate_dataset<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<GeneratedDataset> {
    cfg.validate()?;
    let grid = cfg.grid();
    let eig: Vec<Vec<f64>> = (1..=cfg.kl_truncation)
        .map(|k| grid.iter().map(|&t| eigenfunction(k, t)).collect())
        .collect();
    let noise_sd = cfg.noise_variance.sqrt();
    let mut curves = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2 {
        let mean: Vec<f64> = grid.iter().map(|&t| class_mean(class, t)).collect();
        for _ in 0..cfg.class_sizes[class] {
            let scores = draw_scores(cfg, class, rng);
            let mut y = mean.clone();
            for (theta, psi) in scores.iter().zip(&eig) {
                for (v, p) in y.iter_mut().zip(psi) {
                    *v += theta * p;
                }
            }
            if noise_sd > 0.0 {
                for v in y.iter_mut() {
                    let e: f64 = StandardNormal.sample(rng);
                    *v += noise_sd * e;
                }
            }
            curves.push(y);
            labels.push(class);
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut offset = 0;
    for class in 0..2 {
        let mut idx: Vec<usize> = (offset..offset + cfg.class_sizes[class]).collect();
        idx.shuffle(rng);
        train.extend_from_slice(&idx[..cfg.train_sizes[class]]);
        test.extend_from_slice(&idx[cfg.train_sizes[class]..]);
        offset += cfg.class_sizes[class];
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(GeneratedDataset { grid, curves, labels, train, test })
}

pub fn generate_with_seed(cfg: &ScenarioConfig, seed: u64) -> Result<GeneratedDataset> {
    generate_dataset(cfg, &mut stream_rng(seed, 0))
}

/// Smoothed training sample and test curves of a generated dataset.
pub fn smooth_dataset(
    basis: &BasisSystem,
    data: &GeneratedDataset,
) -> Result<(LabeledSample, Vec<FunctionalDatum>, Vec<usize>)> {
    let smoother = basis.smoother(&data.grid)?;
    let fit = |idx: &[usize]| -> Result<Vec<FunctionalDatum>> {
        idx.iter().map(|&i| smoother.fit(&data.curves[i])).collect()
    };
    let train = LabeledSample::new(fit(&data.train)?, data.train.iter().map(|&i| data.labels[i]).collect(), 2)?;
    let test = fit(&data.test)?;
    let test_labels = data.test.iter().map(|&i| data.labels[i]).collect();
    Ok((train, test, test_labels))
}

/// Full pipeline per replication: generate, smooth (order 6, 20 functions),
/// tune on the training part, classify the test part.
pub fn run_monte_carlo(
    cfg: &ScenarioConfig,
    methods: &[MethodSpec],
    replications: usize,
    seed: u64,
    grid: &TuningGrid,
) -> Result<ExperimentResults> {
    cfg.validate()?;
    let basis = BasisSystem::bspline(0.0, 1.0, SIM_BASIS_ORDER, SIM_BASIS_SIZE)?;
    run_replications(methods, replications, seed, |_, rng| {
        let data = generate_dataset(cfg, rng)?;
        let (train, test, test_labels) = smooth_dataset(&basis, &data)?;
        let tune = tuning_seed(rng);
        evaluate_methods(&basis, &train, &test, &test_labels, methods, grid, tune)
    })
}
