use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vector has zero total mass")]
    ZeroMass,

    #[error("division by zero at index {index} with positive numerator")]
    DivByZero { index: usize },

    #[error("parameter `{name}` = {value} is outside its domain")]
    OutOfDomain { name: String, value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("individual {individual} has no community label")]
    MissingCommunity { individual: usize },

    #[error("observation at t={t}, n={individual} has zero predictive probability")]
    SupportViolation { t: usize, individual: usize },

    #[error("product state space of size {states} exceeds the guard of {limit}")]
    TooLarge { states: usize, limit: usize },

    #[error("observations have zero likelihood under the model")]
    ZeroLikelihood,

    #[error("filter output was computed without storing filter vectors")]
    MissingStore,

    #[error("non-finite objective or gradient at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },

    #[error("all particle weights vanished at t={t}")]
    Degenerate { t: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            row,
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
