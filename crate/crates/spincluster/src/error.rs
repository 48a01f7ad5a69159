//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coincident positions for spins {0} and {1}: dipolar coupling is undefined")]
    DegenerateGeometry(String, String),

    #[error("spin {0} has no coordinates in the supplied structure")]
    MissingCoordinates(String),

    #[error("division by zero: omega_0 must be nonzero")]
    ZeroFrequency,

    #[error("eigenstate assignment ambiguous: best overlap {overlap:.3} for |{ms}, {mi1}, {mi2}>")]
    DegenerateEigenstates {
        overlap: f64,
        ms: i8,
        mi1: i8,
        mi2: i8,
    },

    #[error("non-uniform time grid (step {0} differs from step 0 by {1:.3e})")]
    NonUniformGrid(usize, f64),

    #[error("fit did not converge after {iterations} iterations (residual norm {residual_norm:.6e})")]
    NonConvergence {
        iterations: usize,
        residual_norm: f64,
    },

    #[error(
        "search exhausted placing spin {spin}: tightest violated coupling {spin}-{other} \
         (measured {measured} Hz, best |residual| {best_residual:.2} Hz)"
    )]
    SearchExhausted {
        spin: String,
        other: String,
        measured: f64,
        best_residual: f64,
    },

    #[error("unknown spin label {0}")]
    UnknownSpin(String),

    #[error("conflicting symmetric entries: {0}")]
    AsymmetricTable(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
