use std::path::PathBuf;

use thiserror::Error;

use crate::qreg::TrigQuantileFit;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    /// A periodogram column with zero total power cannot be normalized.
    #[error("degenerate column at alpha = {alpha}: column sum is {sum}")]
    DegenerateColumn { alpha: f64, sum: f64 },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("degenerate target at alpha = {alpha}, frequency index {freq_index}: entry must be positive")]
    DegenerateTarget { alpha: f64, freq_index: usize },

    #[error("degenerate bump: {0}")]
    DegenerateBump(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// The exchange budget ran out. `incumbent` is the best vertex reached.
    #[error("quantile regression solver did not converge after {iterations} iterations")]
    SolverFailure {
        iterations: usize,
        incumbent: Box<TrigQuantileFit>,
    },

    #[error("periodogram cell (k = {k}, alpha = {alpha}): {source}")]
    Cell {
        k: usize,
        alpha: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("non-stationary specification: persistence {persistence} >= 1")]
    NonStationary { persistence: f64 },

    #[error("numerical degeneracy: {0}")]
    Numerical(String),

    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: missing column '{column}'")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}: cannot parse {column} value '{value}'")]
    ParseValue {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{path}: file contains no data rows")]
    EmptyFile { path: PathBuf },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad caller input rather than numerical trouble.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::InvalidInput(_)
            | Error::DegenerateSeries(_)
            | Error::MissingColumn { .. }
            | Error::ParseValue { .. }
            | Error::EmptyFile { .. }
            | Error::Csv { .. }
            | Error::Json(_)
            | Error::NonStationary { .. }
            | Error::DegenerateColumn { .. }
            | Error::DegenerateDesign(_)
            | Error::DegenerateTarget { .. }
            | Error::DegenerateBump(_) => true,
            Error::Cell { source, .. } | Error::Replicate { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
