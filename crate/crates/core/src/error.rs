/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input failed validation (non-finite entries, bad shapes, out-of-range parameters).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two inputs that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A membership matrix violates the simplex invariants, or a soft
    /// membership was passed where a hard partition is required.
    #[error("invalid membership: {0}")]
    InvalidMembership(String),

    /// A factorization failed even after the jitter retry, or a NaN appeared
    /// mid-computation.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A feature column collapsed to (near-)zero norm where a direction is
    /// required.
    #[error("degenerate features: {0}")]
    DegenerateFeatures(String),

    /// The optimizer could not find an ascent step at the first iteration.
    #[error("stagnation: {0}")]
    Stagnation(String),
}

pub type Result<T> = core::result::Result<T, Error>;
