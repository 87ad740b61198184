//! Functional-data classification with the functional Mahalanobis
//! semi-distance.
//!
//! Curves are represented in a B-spline [`basis`], their covariance
//! structure is summarized by functional principal components ([`fpca`]),
//! and [`distances`] between curves feed the [`classifiers`]. Truncations and
//! neighbour counts are chosen by [`tuning`]; [`simulate`] and [`datasets`]
//! drive Monte Carlo and real-data experiments.

pub mod basis;
pub mod classifiers;
pub mod datasets;
pub mod distances;
pub mod error;
pub mod experiment;
pub mod fpca;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod tuning;

pub use basis::{BasisId, BasisSystem, FunctionalDatum, Smoother};
pub use classifiers::{FittedState, Hyperparameters, Method, MethodSpec, TrainedClassifier};
pub use distances::{d_dh, d_fm, d_fpc, d_lp, DistanceKind, DistanceSpec, LpNorm, ModelSet};
pub use error::{ErrorCategory, FdaError, Result};
pub use fpca::{fit_fpca, sample_mean, Center, FitMode, FpcaMode, FpcaModel, LabeledSample};
pub use tuning::{cross_validate, TuningGrid, TuningOutcome};
