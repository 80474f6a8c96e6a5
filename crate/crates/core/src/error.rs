use std::path::PathBuf;
use thiserror::Error;

/// Error type used by operations in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("could not place {k} centers at pairwise separation {separation} within {attempts} attempts")]
    CenterPlacement {
        k: usize,
        separation: f64,
        attempts: usize,
    },
    #[error("dataset holds fewer than {k} distinct points; duplicate centers would start with an empty cluster")]
    TooFewDistinctPoints { k: usize },
    #[error("cost model overflow: {0}")]
    CostOverflow(String),
}

/// Convenient alias for results produced by this crate.
pub type Result<T> = std::result::Result<T, Error>;
