use thiserror::Error;

/// Error type shared by all modules of the crate.
///
/// Numeric payloads are carried as `f64` regardless of the working scalar so
/// the type stays object-safe and printable.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    #[error("nonlinearity violates its declared sign condition: {0}")]
    NonconformingNonlinearity(String),

    #[error(
        "fixed-point iteration not contracting: measured ratio {measured:.6} vs bound {bound:.6}"
    )]
    ContractionFailure { measured: f64, bound: f64 },

    #[error("trajectory diverged at t = {time:.6}: {detail}")]
    Divergence { time: f64, detail: String },

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("jacobian (near-)singular, possible bifurcation point: {0}")]
    NearBifurcation(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("saturation level not found below cap {cap:.3e}")]
    SaturationFailure { cap: f64 },

    #[error("point outside the sampled region: {0}")]
    OutsideSampleBox(String),

    #[error("certification failed: {0}")]
    CertificationFailure(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
