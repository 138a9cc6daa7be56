//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("weight sum {sum} is not positive")]
    ZeroWeightSum { sum: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("missing context: {0}")]
    MissingContext(&'static str),

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("feature dimension mismatch: source {source_dim}, target {target_dim}")]
    FeatureDimMismatch {
        source_dim: usize,
        target_dim: usize,
    },

    #[error("too few correspondences: have {have}, need more than {need}")]
    TooFewCorrespondences { have: usize, need: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("stale trace: backward input does not match the traced forward pass")]
    StaleTrace,

    #[error("sigma^2 must be positive, got {0}")]
    NonPositiveSigma(f64),

    #[error("hypothesis set is empty")]
    EmptyHypothesisSet,

    #[error("all RANSAC samples were degenerate")]
    AllSamplesDegenerate,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    DivergenceDetected { epoch: usize },

    #[error("unknown method `{0}`; valid methods: {1}")]
    UnknownMethod(String, &'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
