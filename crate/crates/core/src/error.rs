use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter outside the support of a distribution or formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A record or input value violated a range or consistency rule.
    #[error("invalid data{}: {msg}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Data { row: Option<usize>, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("area {area} is not covered by the basis ({n_areas} areas)")]
    UnknownArea { area: usize, n_areas: usize },

    #[error("invalid cutpoint request: {0}")]
    Cutpoint(String),

    #[error("conditional precision for block `{block}` is not positive definite")]
    Singular { block: String },

    #[error("design has no rows")]
    EmptyDesign,

    #[error("a single time point was supplied; use the cross-sectional fit instead")]
    SingleTimePoint,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn data(row: impl Into<Option<usize>>, msg: impl Into<String>) -> Self {
        Error::Data {
            row: row.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
