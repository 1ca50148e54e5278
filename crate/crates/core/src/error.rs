use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },

    #[error("matrix is empty")]
    EmptyMatrix,

    #[error("matrix is not Hermitian: relative asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    NotHermitian { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("Hermitian eigensolver failed to converge")]
    EigenConvergence,

    #[error("negative eigenvalue {value:e} is below the PSD repair tolerance")]
    NegativeEigenvalue { value: f64 },

    #[error("quadrature did not converge: doubling {nodes} nodes moved an entry by {change:e}")]
    Quadrature { nodes: usize, change: f64 },

    #[error("empty sample window")]
    EmptyWindow,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("stream has {found} samples, expected exactly {expected}")]
    StreamLength { expected: usize, found: usize },

    #[error("all {runs} runs were censored at {cap} intervals (threshold {theta})")]
    AllCensored { theta: f64, runs: usize, cap: usize },

    #[error("no trial satisfied the conditioning event at change point {nu} (all {runs} runs alarmed early)")]
    EmptyConditioning { nu: usize, runs: usize },

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid config value at `{key}`: {message}")]
    ConfigValue { key: String, message: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
