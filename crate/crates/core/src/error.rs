//! Error types shared across the crate.

use std::path::PathBuf;

/// Errors raised by the physics and sampling layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The integrand was evaluated exactly on one of its singular lines.
    #[error("singular integrand point: {0}")]
    Singular(String),

    /// Adaptive quadrature ran out of subdivisions before reaching tolerance.
    /// Carries the best estimate obtained and the error actually achieved.
    #[error("quadrature did not converge: best estimate {best:e}, achieved error {achieved:e}, {cells} cells")]
    Convergence {
        best: f64,
        achieved: f64,
        cells: usize,
    },

    /// The phase function integrates to zero at this height, so no outgoing
    /// direction can be sampled. Callers treat this as absorption.
    #[error("no scattering possible at z = {z}: scattering cross-section integrates to zero")]
    NoScatter { z: f64 },

    /// A medium definition violated one of its invariants.
    #[error("invalid medium: {0}")]
    InvalidMedium(String),
}

/// Errors raised while loading and validating run configuration.
///
/// The three variants are deliberately distinct classes: a missing file, a
/// file that does not parse, and a file that parses but violates invariants.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("file not found: {path}")]
    MissingFile { path: PathBuf },

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("schema violation in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    /// All invariant violations are collected and reported together, one
    /// `field.path: problem` entry per line.
    #[error("invalid configuration:\n{}", problems.join("\n"))]
    Invalid { problems: Vec<String> },

    #[error(transparent)]
    Medium(#[from] Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
