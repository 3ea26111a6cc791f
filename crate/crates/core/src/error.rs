//! Error taxonomy shared by all numerical kernels.

use thiserror::Error;

/// Errors raised by the numerical kernels.
///
/// Variants carry enough context to diagnose a failed run from the report
/// alone; none of them should be possible for inputs inside the documented
/// validity domain.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Eigenvalue separation or diagonalizer conditioning is too poor to
    /// trust the spectral representation.
    #[error("matrix is numerically defective: {0}")]
    DefectiveMatrix(String),

    /// A metric failed its positive-definiteness (Cholesky) check.
    #[error("metric is not numerically positive definite: {0}")]
    IllConditioned(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Subset A of maximal-Im eigenvalues came out empty.
    #[error("subset A of maximal-Im eigenvalues is empty")]
    EmptySubset,

    /// A propagation factor exp(Im(lambda) dt / hbar) would exceed the f64
    /// range; the caller must switch to the renormalized protocol.
    #[error("propagation overflow: |exp| factor would reach {0:.3e}")]
    Overflow(f64),

    #[error("state vector is numerically zero")]
    ZeroState,

    /// Initial state has no component in subset A, so the suppression
    /// statement is vacuous.
    #[error("initial state has no subset-A component")]
    ZeroProjection,

    /// Time grid too coarse for the requested finite-difference check.
    #[error("time grid too coarse: {0}")]
    GridTooCoarse(String),

    /// A coherent label would populate Fock levels beyond the truncation
    /// fill gate.
    #[error("coherent label overflows truncation: |lambda|^2 = {label_sq:.3} > {allowed:.3}")]
    TruncationOverflow { label_sq: f64, allowed: f64 },

    /// Analytic-bra construction requires real construction scales.
    #[error("analytic bra undefined for non-analytic construction: {0}")]
    NonAnalyticConstruction(String),

    /// sign(Re a) in the delta scaling law is undefined for Re a = 0.
    #[error("branch ambiguity: Re(a) = 0 in delta scaling law")]
    BranchAmbiguity,

    /// Quadrature refinement did not converge.
    #[error("quadrature failed to converge: {0}")]
    NoConvergence(String),

    /// |<B(t)|A(t)>| fell below the configured floor.
    #[error("degenerate overlap <B|A>: |denominator| = {0:.3e}")]
    DegenerateOverlap(f64),

    /// Re(lambda) degeneracy inside subset A; the F-table of the Q2 metric
    /// would be ill-defined.
    #[error("degenerate Re(lambda) inside subset A: {0}")]
    DegenerateReSpectrum(String),

    /// Scenario / configuration errors (bad field, unknown preset, ...).
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
