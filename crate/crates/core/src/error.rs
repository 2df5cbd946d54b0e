//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // skeleton / clips
    #[error("keypoint {0} is missing (confidence 0)")]
    MissingKeypoint(usize),
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("fps mismatch: {0} vs {1}")]
    FpsMismatch(f64, f64),
    #[error("clip has no frames")]
    EmptyClip,
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    // projection
    #[error("3D joint count {found} does not match topology body keypoint count {expected}")]
    JointCountMismatch { expected: usize, found: usize },
    #[error("invalid projection config: {0}")]
    InvalidConfig(String),

    // alignment
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("need at least {needed} correspondences, found {found}")]
    InsufficientCorrespondences { needed: usize, found: usize },
    #[error("empty input")]
    EmptyInput,

    // retarget
    #[error("anchor keypoint '{0}' is absent from the frame")]
    MissingAnchor(String),
    #[error("zero-length bone {0} (direction undefined)")]
    ZeroLengthBone(usize),

    // planner
    #[error("blank input text")]
    BlankInput,

    // io / render
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("unknown topology name '{0}'")]
    UnknownTopology(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(String),

    // metrics
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall { width: u32, height: u32, min: u32 },

    // external services
    #[error("service unreachable at {endpoint}: {detail}")]
    ServiceUnreachable { endpoint: String, detail: String },
    #[error("service contract violation: {0}")]
    ContractViolation(String),

    // pipeline
    #[error("pipeline stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
