use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training sequence is empty")]
    EmptySequence,
    #[error("no words to build a vocabulary tree from")]
    NoWords,
    #[error("vocabulary has no words")]
    EmptyVocabulary,
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("too few correspondences: need {needed}, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },
    #[error("singular normal equations in pose refinement")]
    SingularNormalEquations,
    #[error("no consensus: best hypothesis had {inliers} inliers, need {needed}")]
    NoConsensus { inliers: usize, needed: usize },
    #[error("keyframe database is empty")]
    EmptyDatabase,
    #[error("keyframe {0} has no keypoints with 3D points")]
    NoDepthPoints(u32),
    #[error("missing ground truth: {0}")]
    MissingGroundTruth(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
