use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("objective is not finite at the starting point")]
    NonFiniteStart,

    #[error("non-finite function value probing coordinate {0}")]
    NonFiniteProbe(usize),

    #[error("non-finite function value probing coordinate pair ({0}, {1})")]
    NonFiniteProbePair(usize, usize),

    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),

    #[error("mixture has no components")]
    EmptyMixture,

    #[error("mixture weights must be finite with a positive sum")]
    InvalidWeights,

    #[error("density vanishes on grid")]
    VanishingDensity,

    #[error("no finite starting point for the initial mode search")]
    NoFiniteStart,

    #[error("every initial mode search failed")]
    InitialSearchFailed,

    #[error("unknown target `{name}`; valid targets: {valid}")]
    UnknownTarget { name: String, valid: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
