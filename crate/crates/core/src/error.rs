use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum McamError {
    /// An input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structurally invalid configuration or argument combination.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Several configuration fields failed validation at once.
    #[error("{} configuration error(s): {}", .0.len(), join_field_errors(.0))]
    Validation(Vec<FieldError>),

    /// The requested operation does not apply to the array's regime.
    #[error("regime error: {0}")]
    Regime(String),

    /// The rendering request would alias or is otherwise unrepresentable.
    #[error("render refused: {0}")]
    Render(String),

    /// The pose graph splits into several components.
    #[error("pose graph is disconnected: components {0:?}")]
    Disconnected(Vec<Vec<usize>>),

    /// Degenerate geometry (too few or collinear points, singular systems).
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One offending configuration field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

fn join_field_errors(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| format!("{}: {}", e.field, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl McamError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        McamError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            McamError::Config(_) | McamError::Validation(_) | McamError::Parse(_) | McamError::Json(_) => 2,
            McamError::Domain(_) | McamError::Regime(_) | McamError::Render(_) => 3,
            McamError::Disconnected(_) | McamError::Degenerate(_) => 4,
            McamError::Io { .. } | McamError::Image { .. } => 5,
        }
    }
}

pub type Result<T, E = McamError> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> McamError {
    McamError::Domain(msg.into())
}
