//! Crate-wide error type.
//!
//! Every failure mode is a dedicated variant so that callers (and the CLI
//! exit-code mapping) can distinguish configuration mistakes from genuine
//! numerical breakdown.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A density or temperature value crossed zero (or became non-finite).
    #[error("positivity lost: {context} (min value {min_value:.6e})")]
    Positivity { context: String, min_value: f64 },

    /// Scalar function evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The cyclic tridiagonal system was (numerically) singular.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// Time stepping gave up after repeated step rejections.
    #[error(
        "blow-up at t = {t:.6e}: dt halved {halvings} times without recovery \
         (rho in [{rho_min:.3e}, {rho_max:.3e}], theta in [{theta_min:.3e}, {theta_max:.3e}])"
    )]
    Blowup {
        t: f64,
        halvings: u32,
        rho_min: f64,
        rho_max: f64,
        theta_min: f64,
        theta_max: f64,
    },

    /// Invalid solver or sweep configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A diagnostic needing interior time differences got < 3 snapshots.
    #[error("insufficient snapshots: need at least {needed}, got {got}")]
    InsufficientSnapshots { needed: usize, got: usize },

    /// Two trajectories cannot be compared.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Mean momentum was not normalized to zero where required.
    #[error("normalization error: mean momentum {momentum:.6e} exceeds tolerance {tol:.6e}")]
    Normalization { momentum: f64, tol: f64 },

    /// Mollifier width below the grid resolution.
    #[error("kernel under-resolved: eta = {eta:.6e} < 2 dx = {two_dx:.6e}")]
    KernelUnderresolved { eta: f64, two_dx: f64 },

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    /// The comparison-lemma construction has no usable threshold.
    #[error("not boundable: {0}")]
    NotBoundable(String),

    /// A persisted file does not match the expected layout.
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    /// Config-file syntax error.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Config-file semantic error (a physical condition is violated).
    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
