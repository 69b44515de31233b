use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid Bloch vector: |r| = {0}")]
    InvalidBloch(f64),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("operator is not {kind} (deviation {deviation:e})")]
    OperatorCheck { kind: &'static str, deviation: f64 },

    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
