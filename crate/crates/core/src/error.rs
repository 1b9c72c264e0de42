//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by construction, integration, and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A coherent amplitude does not fit in the requested Fock truncation.
    #[error(
        "truncation too small for coherent amplitude |alpha| = {amplitude_abs}: \
         pre-normalization norm deficit {norm_deficit:e} exceeds {tol:e} at n_max = {n_max}"
    )]
    Truncation {
        amplitude_abs: f64,
        norm_deficit: f64,
        tol: f64,
        n_max: usize,
    },

    /// Matrix or vector dimensions are inconsistent.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A matrix failed the density-matrix invariants.
    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    /// A parameter lies outside its physical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The integrator produced an unnormalizable state (time step too large).
    #[error("stability failure at step {step}: pre-normalization trace deviation {deviation:e}")]
    Stability { step: usize, deviation: f64 },

    /// The steady-state solver failed to isolate a null vector.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// The Liouvillian null space has dimension > 1 (decoupled sectors).
    #[error("degenerate steady state: null-space dimension {dim}")]
    DegenerateSteadyState { dim: usize },

    /// A Bayes update left the Gaussian family (posterior variance <= 0).
    #[error("invalid update: kappa*E + q*v0^2*cos(phi) = {denominator} is not positive")]
    InvalidUpdate { denominator: f64 },

    /// A Monte Carlo sample produced an unusable state.
    #[error("positivity failure in sample {sample}: min eigenvalue {min_eigenvalue:e}")]
    Positivity { sample: usize, min_eigenvalue: f64 },

    /// Configuration parsing or validation failure.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
