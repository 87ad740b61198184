use thiserror::Error;

/// Errors raised by the functional-data toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FdaError {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid domain [{a}, {b}]: lower bound must be strictly below upper bound")]
    InvalidDomain { a: f64, b: f64 },

    #[error("rank-deficient fit: design has effective rank {rank}, {required} required")]
    RankDeficientFit { rank: usize, required: usize },

    #[error("point {t} lies outside the basis domain [{a}, {b}]")]
    OutOfDomain { t: f64, a: f64, b: f64 },

    #[error("functional data live in different bases")]
    BasisMismatch,

    #[error("derivative of order {requested} requested from a basis of order {order}")]
    DerivativeOrderTooHigh { requested: usize, order: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("Gram matrix is not positive definite")]
    BasisDegenerate,

    #[error("truncation {requested} out of range: {available} components retained")]
    KOutOfRange { requested: usize, available: usize },

    #[error("this distance requires exactly two classes, got {classes}")]
    TwoClassOnly { classes: usize },

    #[error("invalid neighbour count {k} for {n} training curves")]
    InvalidK { k: usize, n: usize },

    #[error("invalid priors: {0}")]
    InvalidPriors(String),

    #[error("degenerate covariance for class {class}")]
    DegenerateCovariance { class: usize },

    #[error("fold {fold} has no training curves of class {class}")]
    FoldDegenerate { fold: usize, class: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("parse error at row {row}, column {column}: {value:?} is not a finite number")]
    Parse { row: usize, column: usize, value: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl FdaError {
    /// Broad failure category, used by front ends to pick exit codes.
    pub fn category(&self) -> ErrorCategory {
        use FdaError::*;
        match self {
            InvalidConfiguration(_) | InvalidDomain { .. } | DerivativeOrderTooHigh { .. }
            | KOutOfRange { .. } | TwoClassOnly { .. } | InvalidK { .. } | InvalidPriors(_)
            | InvalidSplit(_) => ErrorCategory::Config,
            Format { .. } | Parse { .. } | Io(_) | OutOfDomain { .. } | BasisMismatch
            | EmptySample | InsufficientData(_) | FoldDegenerate { .. } => ErrorCategory::Data,
            RankDeficientFit { .. } | BasisDegenerate | DegenerateCovariance { .. } => {
                ErrorCategory::Numerical
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}

impl From<std::io::Error> for FdaError {
    fn from(e: std::io::Error) -> Self {
        FdaError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FdaError>;
