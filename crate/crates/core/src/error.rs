use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Factorization or normalization failure.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Sampler state references an index that does not exist.
    #[error("corrupt state: {0}")]
    Corruption(String),

    #[error("config error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parameter(_) => 2,
            Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
            Error::Numerical(_) | Error::Corruption(_) => 4,
            Error::Unsupported(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Numerical(_) => "numerical",
            Error::Corruption(_) => "corruption",
            Error::Config { .. } => "config",
            Error::Data(_) => "data",
            Error::Unsupported(_) => "unsupported",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
