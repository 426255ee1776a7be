use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid error: {0}")]
    Grid(String),

    #[error("invalid value at row {row}, column {column}: {message}")]
    Value {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no series left in panel: {0}")]
    EmptyPanel(String),

    #[error("missing data in series '{series}' at grid index {index}")]
    MissingData { series: String, index: usize },

    #[error("window error: {0}")]
    Window(String),

    #[error("growth rate must be positive, got {0}")]
    Rate(f64),

    #[error("empty sample")]
    EmptySample,

    #[error("sample size {got} is below the required minimum {need}")]
    SampleSize { got: usize, need: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("index {index} out of range (valid: 1..={max})")]
    Index { index: usize, max: usize },

    #[error("regressor has zero variance")]
    DegenerateRegressor,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Errors caused by malformed or unusable input data, as opposed to
    /// numerical breakdown or invalid configuration.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Grid(_)
                | Error::Value { .. }
                | Error::Schema(_)
                | Error::Parse { .. }
                | Error::EmptyPanel(_)
                | Error::MissingData { .. }
                | Error::Window(_)
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
