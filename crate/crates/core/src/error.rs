use thiserror::Error;

/// Errors raised by the operator, channel, tester and bound pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("harmonic condition violated: 1/{alpha} + 1/{beta} != 2")]
    Harmonic { alpha: f64, beta: f64 },

    #[error("Rényi order must be nonnegative, got {0}")]
    NegativeOrder(f64),

    #[error(
        "subset enumeration over {size} effects exceeds the cap of {cap} \
         (2^{size} subsets); raise the enumeration cap explicitly to proceed"
    )]
    EnumerationCap { size: usize, cap: usize },

    #[error("min-entropy SDP failed on subset {subset:?}: {detail}")]
    Sdp { subset: Vec<usize>, detail: String },

    #[error("unknown functional `{0}` (expected shannon, renyi:<alpha> or min-entropy)")]
    UnknownFunctional(String),

    #[error("vector set is empty")]
    EmptySet,

    #[error("vector totals disagree: {0} vs {1}")]
    TotalMismatch(f64, f64),

    #[error("no primal optimizer retained for k = {0}")]
    MissingOptimizer(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
