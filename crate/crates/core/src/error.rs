use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A row of a flow CSV could not be accepted.
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mode {mode} out of range for a plant with {n_modes} modes")]
    ModeOutOfRange { mode: usize, n_modes: usize },

    #[error("{what} = {value} outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("no flow data for year {0}")]
    MissingYear(i32),

    #[error("performance ratio undefined for hindsight profit {0}")]
    UndefinedRatio(f64),

    #[error("config: {0}")]
    Config(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
