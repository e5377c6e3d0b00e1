use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("alignment error at data row {row}: {detail}")]
    Alignment { row: usize, detail: String },
    #[error("data error at data row {row}, column `{column}`: {detail}")]
    Data { row: usize, column: String, detail: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("degenerate column `{0}`: zero sample variance")]
    DegenerateColumn(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("{context}: matrix is not positive definite (condition number ~ {condition:.3e})")]
    NotPositiveDefinite { context: String, condition: f64 },
    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("optimizer failure: {0}")]
    Optimizer(String),
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("window {window}: {source}")]
    AtWindow {
        window: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => ErrorKind::Usage,
            Error::Io { .. }
            | Error::Csv { .. }
            | Error::Alignment { .. }
            | Error::Data { .. }
            | Error::Schema(_)
            | Error::DegenerateColumn(_)
            | Error::Dimension(_)
            | Error::InsufficientData(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::Singular(_)
            | Error::NotPositiveDefinite { .. }
            | Error::DegeneratePosterior(_)
            | Error::Calibration(_)
            | Error::Normalization(_)
            | Error::Undefined(_)
            | Error::DegenerateFit(_)
            | Error::Optimizer(_) => ErrorKind::Numerical,
            Error::AtIteration { source, .. } | Error::AtWindow { source, .. } => source.kind(),
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Alignment { .. } => "alignment",
            Error::Data { .. } => "data",
            Error::Schema(_) => "schema",
            Error::DegenerateColumn(_) => "degenerate_column",
            Error::Dimension(_) => "dimension",
            Error::Singular(_) => "singular",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::DegeneratePosterior(_) => "degenerate_posterior",
            Error::Calibration(_) => "calibration",
            Error::Normalization(_) => "normalization",
            Error::InsufficientData(_) => "insufficient_data",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Config(_) => "config",
            Error::Undefined(_) => "undefined",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::Optimizer(_) => "optimizer",
            Error::AtIteration { source, .. } | Error::AtWindow { source, .. } => source.code(),
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn at_window(self, window: usize) -> Error {
        Error::AtWindow {
            window,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
