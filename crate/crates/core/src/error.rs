//! Error types shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("quadrature did not converge: requested tol {tol:e}, achieved {achieved:e} after {evals} evaluations")]
    Quadrature { tol: f64, achieved: f64, evals: usize },

    #[error("channel fidelity too low: mu={mu} loses {capacity_loss:.6} bits of capacity")]
    FidelityTooLow { mu: usize, capacity_loss: f64 },

    #[error("wiretap degradation violated at index {index}: Z_eve={z_eve:.6e} < Z_bob={z_bob:.6e} - tol")]
    DegradationViolated { index: usize, z_eve: f64, z_bob: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("file format error: {0}")]
    Format(String),

    #[error("checksum mismatch: stored {stored}, computed {computed}")]
    Checksum { stored: String, computed: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
