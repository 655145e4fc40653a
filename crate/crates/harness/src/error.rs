use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error{}: {message}", location(*line, field.as_deref()))]
    Config { message: String, line: Option<usize>, field: Option<String> },
    #[error("width {width} needs {required} replicas, got {replicas}; pass --ack-undersampled to run anyway")]
    Undersampled { width: usize, replicas: usize, required: usize },
    #[error("power-law fit needs strictly positive coordinates, got ({x}, {y})")]
    InvalidFitInput { x: f64, y: f64 },
    #[error("power-law fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Core(#[from] ntkgauss_core::Error),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

fn location(line: Option<usize>, field: Option<&str>) -> String {
    match (line, field) {
        (Some(l), Some(f)) => format!(" at line {l} (field `{f}`)"),
        (Some(l), None) => format!(" at line {l}"),
        (None, Some(f)) => format!(" (field `{f}`)"),
        (None, None) => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// JSON record printed on failure.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config { .. } => "ConfigError",
            HarnessError::Undersampled { .. } => "UndersampledError",
            HarnessError::InvalidFitInput { .. } => "InvalidFitInput",
            HarnessError::TooFewPoints(_) => "TooFewPoints",
            HarnessError::Core(_) => "NumericalError",
            HarnessError::Io { .. } => "IoError",
            HarnessError::Csv(_) => "CsvError",
            HarnessError::Argument(_) => "ArgumentError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } | HarnessError::Argument(_) => 2,
            HarnessError::Undersampled { .. } => 3,
            _ => 1,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let (line, field) = match self {
            HarnessError::Config { line, field, .. } => (*line, field.clone()),
            _ => (None, None),
        };
        ErrorRecord { error: self.kind(), message: self.to_string(), line, field }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Csv(e.to_string())
    }
}
