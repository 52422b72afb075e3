use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("invalid extrinsics{}: {reason}", camera.as_ref().map(|c| format!(" for camera {c}")).unwrap_or_default())]
    InvalidExtrinsics {
        camera: Option<String>,
        reason: String,
    },

    #[error("point is behind the camera (homogeneous scale {scale:e})")]
    BehindCamera { scale: f64 },

    #[error("degenerate camera: ground homography determinant {det:e}")]
    DegenerateCamera { det: f64 },

    #[error("point ({x}, {y}) lies outside the ground grid")]
    OutOfBounds { x: f64, y: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unknown camera id {0}")]
    UnknownCamera(usize),

    #[error("crowd does not fit: placed {placed} of {requested} pedestrians within the retry budget")]
    Capacity { placed: usize, requested: usize },

    #[error("training diverged at step {step}: {detail}")]
    TrainingDiverged { step: usize, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}:{line}: parse error: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("{context}: {path}: {source}")]
    Io {
        context: String,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            path: path.into(),
            source,
        }
    }

    /// Short machine-parseable class name, used for CLI diagnostics.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidIntrinsics(_) | Error::InvalidExtrinsics { .. } => "invalid-camera",
            Error::BehindCamera { .. } => "behind-camera",
            Error::DegenerateCamera { .. } => "degenerate-camera",
            Error::OutOfBounds { .. } => "out-of-bounds",
            Error::Shape(_) => "shape",
            Error::EmptyInput(_) => "empty-input",
            Error::UnknownCamera(_) => "unknown-camera",
            Error::Capacity { .. } => "capacity",
            Error::TrainingDiverged { .. } => "training-diverged",
            Error::Config(_) => "config",
            Error::Version { .. } => "bad-version",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    /// Whether the failure is numeric (training) rather than data related.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::TrainingDiverged { .. })
    }
}
