use thiserror::Error;

/// Errors raised by the recovery library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("zero signal: {0}")]
    ZeroSignal(&'static str),

    #[error(
        "no well-separated frequency set found after {draws} draws (k={k}, min_sep={min_sep})"
    )]
    RejectionBudget { draws: u64, k: usize, min_sep: f64 },

    #[error("rank-deficient atom matrix: {columns} columns, numerical rank {rank}")]
    RankDeficient { columns: usize, rank: usize },

    #[error("count mismatch: {truth} true frequencies vs {estimate} estimates")]
    CountMismatch { truth: usize, estimate: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected,
                actual,
            })
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
