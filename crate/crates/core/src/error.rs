use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid must have positive height and width (got {height}x{width})")]
    EmptyGrid { height: usize, width: usize },

    #[error("expected {expected} values for the grid shape, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("value {value} at ({row}, {col}) is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },

    #[error("cell ({row}, {col}) enters at {value} before its face at {face_value}")]
    InvalidFiltration {
        row: usize,
        col: usize,
        value: f64,
        face_value: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate phantom: {0}")]
    DegeneratePhantom(String),

    #[error("malformed {kind} data in {path}: {reason}")]
    Parse {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
