//! Cross-validated choice of truncation and neighbour count.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSystem;
use crate::classifiers::{FittedState, Hyperparameters, MethodSpec};
use crate::error::{FdaError, Result};
use crate::fpca::LabeledSample;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Folds {
    KFold(usize),
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub max_components: usize,
    pub neighbor_values: Vec<usize>,
    pub folds: Folds,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self { max_components: 15, neighbor_values: (1..=9).collect(), folds: Folds::KFold(10) }
    }
}

impl TuningGrid {
    pub fn new(max_components: usize, max_neighbors: usize, folds: Folds) -> Result<Self> {
        let grid = Self { max_components, neighbor_values: (1..=max_neighbors).collect(), folds };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_components == 0 {
            return Err(FdaError::InvalidConfiguration("max_components must be at least 1".into()));
        }
        if self.neighbor_values.is_empty() || self.neighbor_values.contains(&0) {
            return Err(FdaError::InvalidConfiguration("neighbour values must be positive".into()));
        }
        if let Folds::KFold(k) = self.folds {
            if k < 2 {
                return Err(FdaError::InvalidConfiguration("at least 2 folds required".into()));
            }
        }
        Ok(())
    }
}

/// Accuracy of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPointResult {
    pub truncation: Option<usize>,
    pub k_neighbors: Option<usize>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningOutcome {
    pub hyper: Hyperparameters,
    pub cv_accuracy: f64,
    pub table: Vec<GridPointResult>,
    /// Truncation ceiling actually searched, when clamping was needed.
    pub clamped_truncation: Option<usize>,
}

/// Stratified fold index for every curve: each class is shuffled and dealt
/// round-robin, continuing where the previous class stopped.
pub fn stratified_folds(sample: &LabeledSample, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(seed, u64::MAX);
    let mut assignment = vec![0; sample.len()];
    let mut next = 0;
    for g in 0..sample.num_classes() {
        let mut members = sample.class_indices(g);
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

/// Select hyperparameters for `spec` by cross-validation on `train`.
///
/// Every fold refits all class means and covariance models on its own
/// training portion; class priors stay those of the full training sample. Grid points are ranked by mean fold accuracy; ties go
/// to the smallest truncation, then the smallest neighbour count.
pub fn cross_validate(
    basis: &BasisSystem,
    train: &LabeledSample,
    spec: MethodSpec,
    grid: &TuningGrid,
    seed: u64,
) -> Result<TuningOutcome> {
    grid.validate()?;
    let n = train.len();
    let folds = match grid.folds {
        Folds::KFold(k) => k.min(n),
        Folds::LeaveOneOut => n,
    };
    if folds < 2 {
        return Err(FdaError::InsufficientData("cross-validation needs at least 2 curves".into()));
    }
    let assignment = match grid.folds {
        Folds::LeaveOneOut => (0..n).collect(),
        Folds::KFold(_) => stratified_folds(train, folds, seed),
    };

    let priors = train.proportions();
    let states: Vec<(FittedState, Vec<usize>)> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let (fit_idx, held): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] != fold);
            let counts = {
                let mut c = vec![0usize; train.num_classes()];
                for &i in &fit_idx {
                    c[train.labels()[i]] += 1;
                }
                c
            };
            if let Some(class) = counts.iter().position(|&c| c == 0) {
                return Err(FdaError::FoldDegenerate { fold, class });
            }
            let part = train.subset(&fit_idx)?;
            Ok((FittedState::fit_with_priors(basis, &part, spec, &priors)?, held))
        })
        .collect::<Result<_>>()?;

    let truncation_ceiling = if spec.uses_truncation() {
        let fold_min = states.iter().map(|(s, _)| s.max_truncation()).min().unwrap_or(0);
        let ceiling = grid.max_components.min(fold_min);
        if ceiling == 0 {
            return Err(FdaError::InsufficientData(format!(
                "no principal components retained in some fold for {spec}"
            )));
        }
        ceiling
    } else {
        0
    };
    let clamped = (spec.uses_truncation() && truncation_ceiling < grid.max_components).then(|| {
        log::debug!("{spec}: truncation grid clamped to {truncation_ceiling}");
        truncation_ceiling
    });

    let neighbors: Vec<usize> = if spec.uses_neighbors() {
        let min_fit = states.iter().map(|(s, _)| s.train_size()).min().unwrap_or(0);
        let ks: Vec<usize> = grid.neighbor_values.iter().copied().filter(|&k| k <= min_fit).collect();
        if ks.is_empty() {
            return Err(FdaError::InvalidK { k: grid.neighbor_values[0], n: min_fit });
        }
        ks
    } else {
        Vec::new()
    };
    let rows = if spec.uses_truncation() { truncation_ceiling } else { 1 };
    let cols = neighbors.len().max(1);

    let per_fold: Vec<Vec<f64>> = states
        .par_iter()
        .map(|(state, held)| {
            let mut correct = vec![0usize; rows * cols];
            for &i in held {
                let labels = state.predict_grid(&train.data()[i], truncation_ceiling, &neighbors)?;
                for (t, row) in labels.iter().enumerate() {
                    for (j, &l) in row.iter().enumerate() {
                        if l == train.labels()[i] {
                            correct[t * cols + j] += 1;
                        }
                    }
                }
            }
            Ok(correct.into_iter().map(|c| c as f64 / held.len() as f64).collect())
        })
        .collect::<Result<_>>()?;

    let mut table = Vec::with_capacity(rows * cols);
    for t in 0..rows {
        for j in 0..cols {
            let fold_accuracies: Vec<f64> = per_fold.iter().map(|f| f[t * cols + j]).collect();
            let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
            table.push(GridPointResult {
                truncation: spec.uses_truncation().then_some(t + 1),
                k_neighbors: neighbors.get(j).copied(),
                fold_accuracies,
                mean_accuracy,
            });
        }
    }
    // table is ordered by truncation, then k: the first maximum wins ties
    let best = table
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.mean_accuracy > table[best].mean_accuracy { i } else { best });
    let chosen = &table[best];
    Ok(TuningOutcome {
        hyper: Hyperparameters { truncation: chosen.truncation, k_neighbors: chosen.k_neighbors },
        cv_accuracy: chosen.mean_accuracy,
        table,
        clamped_truncation: clamped,
    })
}
