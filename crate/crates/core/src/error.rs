use thiserror::Error;

/// Crate-wide error type. Variants map to the failure classes surfaced by the
/// public API: bad input data, bad parameters, exceeded capacities, broken
/// numeric invariants, and plain I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),

    #[error("unsupported probability: {0}")]
    SupportViolation(String),

    #[error("gradient layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("worker {id}: {source}")]
    Worker {
        id: u32,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Tags an error with the worker it came from.
    pub fn in_worker(self, id: u32) -> Error {
        Error::Worker { id, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
