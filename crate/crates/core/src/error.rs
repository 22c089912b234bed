use std::path::PathBuf;

/// Errors produced anywhere in the fitting, simulation and reporting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,

    #[error("value at index {index} must be strictly positive, got {value}")]
    NonPositive { index: usize, value: f64 },

    #[error("input is constant; {0} is undefined")]
    ConstantInput(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("mixture with {k} components collapsed to zero variance after {attempts} attempts")]
    DegenerateMixture { k: usize, attempts: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("block {block} references unknown parent {parent}")]
    UnknownParent { block: usize, parent: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: field `{field}` {message}")]
    Field {
        line: u64,
        field: &'static str,
        message: String,
    },

    #[error("configuration {config_id}, seed {seed}: {source}")]
    RunFailed {
        config_id: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
