use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("covariate `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("date {date} is outside the winter starting {start}")]
    OutsideWinter { date: String, start: String },

    #[error("degenerate range for `{0}`: all values are equal")]
    DegenerateRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),

    #[error("target df {target} unreachable, attainable interval is [{lo}, {hi}]")]
    DfUnreachable { target: f64, lo: f64, hi: f64 },

    #[error("singular penalized system in base-learner `{0}`")]
    Singular(String),

    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: String, iteration: usize },

    #[error("degenerate response: {0}")]
    DegenerateResponse(String),

    #[error("formula error: {0}")]
    Formula(String),

    #[error("artifact version mismatch: expected {expected}, found {found}")]
    Version { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(String),
}

pub type Result<T> = std::result::Result<T, Error>;
