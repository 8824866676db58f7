use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("columns are not orthonormal (Gram deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    /// `|⟨b|a⟩|` at or below the cutoff: the conditional is undefined.
    #[error("conditioning pair is orthogonal (|<b|a>| = {overlap:.3e})")]
    OrthogonalCondition { overlap: f64 },

    #[error("bases do not match: {0}")]
    BasisMismatch(String),

    #[error("basis carries no outcome values")]
    MissingValues,

    #[error("phase-transform denominator vanishes (|sum| = {magnitude:.3e})")]
    DegenerateDenominator { magnitude: f64 },

    #[error("reference overlap p(m|b_ref) = {value:.3e} too small for outcome {index}")]
    ZeroReferenceOverlap { index: usize, value: f64 },

    #[error("coupling g = {0} outside the weak regime (0, 0.2]")]
    WeakRegimeViolation(f64),

    #[error("only {postselected} post-selected shots (need at least 100)")]
    PostSelectionStarvation { postselected: u64 },

    #[error("result has imaginary residue {0:.3e}")]
    ImaginaryResidue(f64),

    #[error("bad lattice grid: {0}")]
    BadGrid(String),

    #[error("hamiltonian is not hermitian (deviation {0:.3e})")]
    NonHermitian(f64),

    #[error("phase unwrap is ambiguous at grid index {index}")]
    PhaseUnwrapFailure { index: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the caller's inputs rather than by numerics.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::NotOrthonormal { .. }
                | Error::IndexOutOfRange { .. }
                | Error::OrthogonalCondition { .. }
                | Error::BasisMismatch(_)
                | Error::MissingValues
                | Error::WeakRegimeViolation(_)
                | Error::BadGrid(_)
                | Error::Precondition(_)
                | Error::Json(_)
        )
    }
}
