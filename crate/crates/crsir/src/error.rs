//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by estimation, ingestion, and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A column has zero sample standard deviation and cannot be standardized.
    #[error("column {0} is constant (zero sample standard deviation)")]
    ConstantColumn(usize),
    /// An argument fell outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Every column of the input fell below the rank tolerance.
    #[error("all columns are below the rank tolerance")]
    RankZero,
    /// The eigenvalue iteration did not converge.
    #[error("eigenvalue iteration failed to converge")]
    ConvergenceFailure,
    /// The right-hand matrix of a generalized eigenproblem is numerically singular.
    #[error("matrix is not positive definite (eigenvalue ratio {0:.3e})")]
    NotPositiveDefinite(f64),
    /// Too few observations for the requested slicing.
    #[error("need at least {need} observations, got {got}")]
    TooFewObservations { need: usize, got: usize },
    /// An input's shape does not match the fitted model or its pair.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// A regression design matrix is rank deficient.
    #[error("design matrix is rank deficient")]
    RankDeficient,
    /// The forecast-head design stayed rank deficient even with one variate.
    #[error("variate design for the forecast head is singular")]
    SingularHead,
    /// A series is too short for lag alignment.
    #[error("series too short: {got} usable rows, need {need}")]
    TooShort { need: usize, got: usize },
    /// Two paired sequences have different lengths.
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    /// A cell of the input panel could not be parsed or transformed.
    #[error("parse error at row {row}, series '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    /// An unrecognized per-series transform code.
    #[error("unknown transform code '{0}'")]
    UnknownTransformCode(String),
    /// Model artifact could not be encoded, decoded, or validated.
    #[error("model artifact error: {0}")]
    Artifact(String),
    /// Configuration file or flag validation failure.
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code class: 1 usage, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Config(_) => 1,
            Error::ConstantColumn(_)
            | Error::TooFewObservations { .. }
            | Error::DimensionMismatch { .. }
            | Error::TooShort { .. }
            | Error::LengthMismatch(_, _)
            | Error::Parse { .. }
            | Error::UnknownTransformCode(_)
            | Error::Artifact(_)
            | Error::Io(_) => 2,
            Error::RankZero
            | Error::ConvergenceFailure
            | Error::NotPositiveDefinite(_)
            | Error::RankDeficient
            | Error::SingularHead => 3,
        }
    }
}
