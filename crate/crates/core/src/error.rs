use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("phase is undefined at the origin")]
    UndefinedPhase,
    #[error("numerical blow-up: {0}")]
    NumericalBlowUp(String),
    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("not enough gait cycles: {0}")]
    InsufficientCycles(String),
    #[error("invalid contact value {0}, expected -1 or +1")]
    InvalidContact(f64),
    #[error("zero target velocity")]
    ZeroTargetVelocity,
    #[error("degenerate quaternion (norm {0})")]
    DegenerateQuaternion(f64),
    #[error("camera below terrain surface at ({x:.3}, {y:.3}): z = {z:.3} < ground {ground:.3}")]
    CameraBelowGround { x: f64, y: f64, z: f64, ground: f64 },
    #[error("insufficient history: need {needed}, have {have}")]
    InsufficientHistory { needed: usize, have: usize },
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
