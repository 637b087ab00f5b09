use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("newton solve for a branch preimage of {target} stalled at residual {residual:e}")]
    NewtonDivergence { target: f64, residual: f64 },

    #[error("enumeration of {count} points exceeds the limit {limit}")]
    EnumerationOverflow { count: u128, limit: u128 },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("observable is not real-valued (conjugate-symmetry defect {defect:e})")]
    NonRealObservable { defect: f64 },

    #[error("map `{map}` cannot be discretized in a {basis} basis")]
    IncompatiblePair { map: String, basis: String },

    #[error("leading eigenvalue is not simple: |λ1| - |λ2| = {separation:e}")]
    DegenerateLeadingEigenvalue { separation: f64 },

    #[error("contour passes too close to the spectrum (condition estimate {condition:e})")]
    ContourCrossesSpectrum { condition: f64 },

    #[error("contour encloses the wrong number of eigenvalues (trace {trace})")]
    WrongEnclosedCount { trace: f64 },

    #[error("Riesz projection annihilates the invariant density (norm {norm:e})")]
    ProjectionKilledChi { norm: f64 },

    #[error("invariant density is not bounded away from zero (min {min:e})")]
    DensityVanishes { min: f64 },

    #[error("restricted resolvent is singular (condition estimate {condition:e})")]
    SingularResolvent { condition: f64 },

    #[error("{count} inverse branch words exceed the limit {limit}")]
    BranchExplosion { count: u128, limit: u128 },

    #[error("no parameter in the scanned range produced a positive certificate")]
    NoneCertified,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
