use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("spin index {index} out of range for {n_spins} spins")]
    IndexOutOfRange { index: usize, n_spins: usize },

    #[error("spin value {0} is not -1 or +1")]
    InvalidSpin(i64),

    #[error("self-coupling on spin {0}")]
    SelfCoupling(usize),

    #[error("nudging strength must be positive, got {0}")]
    InvalidBeta(f64),

    #[error("brute-force enumeration limited to {max} spins, problem has {n_spins}")]
    TooLarge { n_spins: usize, max: usize },

    #[error("negative temperature {0}")]
    NegativeTemperature(f64),

    #[error("invalid annealing schedule: {0}")]
    InvalidSchedule(String),

    #[error("no physical edge between chains of logical spins {0} and {1}")]
    MissingEdge(usize, usize),

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("Chimera graph too small: need at least {need}x{need} cells")]
    GraphTooSmall { need: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
