use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("degenerate input: {what} at index {index}")]
    Degenerate { what: &'static str, index: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("non-finite value in {0}")]
    Numeric(String),
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("consistency error: expected {expected}, found {actual}")]
    Consistency { expected: String, actual: String },
    #[error("undefined average precision: class {0} has no positive labels")]
    UndefinedAp(usize),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-parsable category used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Degenerate { .. } => "degenerate",
            Error::Parameter(_) => "parameter",
            Error::Distribution(_) => "distribution",
            Error::Numeric(_) => "numeric",
            Error::Index { .. } => "index",
            Error::Vocabulary(_) => "vocabulary",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Consistency { .. } => "consistency",
            Error::UndefinedAp(_) => "undefined_ap",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
