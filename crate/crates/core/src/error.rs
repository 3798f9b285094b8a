use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library reports.
///
/// Variants split into two families: input validation (the caller handed
/// over something that breaks a stated invariant) and numerical failure
/// (the input was well-formed but the computation cannot proceed).
/// [`Error::is_numerical`] tells them apart.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state is not faithful: {0}")]
    NonFaithful(String),
    #[error("state is not normalised: {0}")]
    NotNormalised(String),
    #[error("element does not belong to this algebra: {0}")]
    ModelMismatch(String),
    #[error("monomial degree {0} exceeds the cap of {max}", max = crate::algebra::MAX_INDEPENDENCE_DEGREE)]
    DegreeTooLarge(usize),
    #[error("element is not an observable (not self-adjoint): {0}")]
    NotObservable(String),
    #[error("not a density: {0}")]
    NotDensity(String),
    #[error("weighted state would not be faithful: {0}")]
    NonFaithfulResult(String),
    #[error("function outside its domain: {0}")]
    DomainError(String),
    #[error("bad exponent {0}: need 1 <= p <= inf")]
    BadExponent(f64),
    #[error("result is not real: imaginary residue {0:e}")]
    NotReal(f64),

    #[error("invalid snapshot set: {0}")]
    InvalidSnapshots(String),
    #[error("dimension {dim} exceeds the cap of {cap}")]
    DimensionOverflow { dim: usize, cap: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("correlation operator vanishes (trace {0:e})")]
    ZeroOperator(f64),
    #[error("rank {n} out of range 0..={k}")]
    RankOutOfRange { n: usize, k: usize },
    #[error("operator is not positive semi-definite: {0}")]
    NotPsd(String),
    #[error("operator is not symmetric: {0}")]
    NotSymmetric(String),
    #[error("factorisations do not share a correlation operator: {0}")]
    MismatchedCorrelation(String),
    #[error("weights are not a probability vector: sum = {0}")]
    WeightsNotProbability(f64),

    #[error("basis is not orthonormal: deviation {0:e}")]
    NotOrthonormal(f64),
    #[error("frequency grid is empty")]
    EmptyGrid,
    #[error("need at least {min} paths, got {got}")]
    InsufficientPaths { got: usize, min: usize },

    #[error("galerkin solver needs a function-model algebra")]
    NotFunctionModel,
    #[error("coefficient field is not strictly positive: min = {0}")]
    UnstableKappa(f64),
    #[error("state became non-finite at step {0}")]
    NonFiniteState(usize),

    #[error("{path}: row {row}, col {col}: {msg}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for failures of the computation itself rather than of input validation.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFaithful(_)
                | Error::NonFaithfulResult(_)
                | Error::NotPsd(_)
                | Error::ZeroOperator(_)
                | Error::NotReal(_)
                | Error::DomainError(_)
                | Error::NonFiniteState(_)
                | Error::UnstableKappa(_)
                | Error::MismatchedCorrelation(_)
        )
    }
}
