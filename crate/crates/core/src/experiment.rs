//! Shared replication harness for simulated and real-data experiments.
//!
//! One replication trains every requested method on a training sample
//! (tuning hyperparameters by cross-validation on that sample only) and
//! scores it on the matching test sample. Replications are independent and
//! run in parallel; aggregation follows replication order.

use rand::RngCore;
use rayon::prelude::*;

use crate::basis::{BasisSystem, FunctionalDatum};
use crate::classifiers::{FittedState, Hyperparameters, MethodSpec, TrainedClassifier};
use crate::error::{FdaError, Result};
use crate::fpca::LabeledSample;
use crate::rng::{replication_rng, ExperimentRng};
use crate::tuning::{cross_validate, TuningGrid};

/// Retries allowed for a failing replication before it is counted as failed.
pub const MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub spec: MethodSpec,
    pub accuracy: f64,
    pub hyper: Hyperparameters,
    pub cv_accuracy: f64,
    pub predictions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub replication: usize,
    /// Zero-based attempt that succeeded.
    pub attempt: usize,
    pub methods: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub error: FdaError,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub spec: MethodSpec,
    pub replications: usize,
    pub accuracy: MeanSd,
    pub truncation: Option<MeanSd>,
    pub k_neighbors: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub requested: usize,
    pub replications: Vec<ReplicationOutcome>,
    pub failures: Vec<ReplicationFailure>,
    pub summaries: Vec<MethodSummary>,
}

impl ExperimentResults {
    pub fn summary(&self, spec: MethodSpec) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.spec == spec)
    }

    /// Test accuracies of one method, in replication order.
    pub fn accuracies(&self, spec: MethodSpec) -> Vec<f64> {
        self.replications
            .iter()
            .filter_map(|r| r.methods.iter().find(|m| m.spec == spec).map(|m| m.accuracy))
            .collect()
    }

    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Tune (when needed), train and test every method on one split.
pub fn evaluate_methods(
    basis: &BasisSystem,
    train: &LabeledSample,
    test: &[FunctionalDatum],
    test_labels: &[usize],
    methods: &[MethodSpec],
    grid: &TuningGrid,
    tune_seed: u64,
) -> Result<Vec<MethodOutcome>> {
    if test.len() != test_labels.len() {
        return Err(FdaError::InvalidConfiguration("test curves and labels differ in length".into()));
    }
    methods
        .iter()
        .map(|&spec| {
            let (hyper, cv_accuracy) = if spec.uses_truncation() || spec.uses_neighbors() {
                let outcome = cross_validate(basis, train, spec, grid, tune_seed)?;
                (outcome.hyper, outcome.cv_accuracy)
            } else {
                (Hyperparameters::default(), f64::NAN)
            };
            let state = FittedState::fit(basis, train, spec)?;
            // the full training sample can retain fewer components than a fold
            let hyper = Hyperparameters {
                truncation: hyper.truncation.map(|t| t.min(state.max_truncation())),
                k_neighbors: hyper.k_neighbors,
            };
            let classifier = TrainedClassifier::from_state(state, hyper)?;
            let predictions =
                test.iter().map(|f| classifier.classify(f)).collect::<Result<Vec<usize>>>()?;
            let correct = predictions.iter().zip(test_labels).filter(|(p, l)| p == l).count();
            let accuracy = if test.is_empty() { f64::NAN } else { correct as f64 / test.len() as f64 };
            Ok(MethodOutcome { spec, accuracy, hyper, cv_accuracy, predictions })
        })
        .collect()
}

/// Runs `replications` independent replications of `body`, each with its own
/// random stream. A failing replication is redrawn on a fresh stream up to
/// [`MAX_RETRIES`] times, then recorded as a failure.
pub fn run_replications<F>(
    methods: &[MethodSpec],
    replications: usize,
    seed: u64,
    body: F,
) -> Result<ExperimentResults>
where
    F: Fn(usize, &mut ExperimentRng) -> Result<Vec<MethodOutcome>> + Sync,
{
    if replications == 0 {
        return Err(FdaError::InvalidConfiguration("at least one replication required".into()));
    }
    if methods.is_empty() {
        return Err(FdaError::InvalidConfiguration("no methods requested".into()));
    }
    let outcomes: Vec<std::result::Result<ReplicationOutcome, ReplicationFailure>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut last = None;
            for attempt in 0..=MAX_RETRIES {
                let mut rng = replication_rng(seed, r, attempt);
                match body(r, &mut rng) {
                    Ok(methods) => return Ok(ReplicationOutcome { replication: r, attempt, methods }),
                    Err(e) => {
                        log::warn!("replication {r} attempt {attempt} failed: {e}");
                        last = Some(e);
                    }
                }
            }
            Err(ReplicationFailure { replication: r, error: last.expect("at least one attempt") })
        })
        .collect();

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => ok.push(r),
            Err(f) => failures.push(f),
        }
    }
    let summaries = summarize(methods, &ok);
    Ok(ExperimentResults { requested: replications, replications: ok, failures, summaries })
}

/// Derive a cross-validation seed from a replication stream.
pub fn tuning_seed(rng: &mut ExperimentRng) -> u64 {
    rng.next_u64()
}

pub fn summarize(methods: &[MethodSpec], reps: &[ReplicationOutcome]) -> Vec<MethodSummary> {
    methods
        .iter()
        .map(|&spec| {
            let outcomes: Vec<&MethodOutcome> =
                reps.iter().filter_map(|r| r.methods.iter().find(|m| m.spec == spec)).collect();
            let acc: Vec<f64> = outcomes.iter().map(|m| m.accuracy).collect();
            let trunc: Vec<f64> = outcomes.iter().filter_map(|m| m.hyper.truncation.map(|t| t as f64)).collect();
            let ks: Vec<f64> = outcomes.iter().filter_map(|m| m.hyper.k_neighbors.map(|k| k as f64)).collect();
            MethodSummary {
                spec,
                replications: outcomes.len(),
                accuracy: mean_sd(&acc),
                truncation: (!trunc.is_empty()).then(|| mean_sd(&trunc)),
                k_neighbors: (!ks.is_empty()).then(|| mean_sd(&ks)),
            }
        })
        .collect()
}

/// Pairwise (cascade) summation; result independent of thread scheduling.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Mean and sample (`n − 1`) standard deviation; `sd = 0` for one value.
pub fn mean_sd(values: &[f64]) -> MeanSd {
    let n = values.len();
    if n == 0 {
        return MeanSd { mean: f64::NAN, sd: f64::NAN };
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return MeanSd { mean, sd: 0.0 };
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    MeanSd { mean, sd: (pairwise_sum(&sq) / (n - 1) as f64).sqrt() }
}
