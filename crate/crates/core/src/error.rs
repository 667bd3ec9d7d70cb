use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pose ({x:.3}, {y:.3}): {reason}")]
    InvalidPose {
        x: f64,
        y: f64,
        reason: &'static str,
    },

    #[error("angle {theta} rad lies outside the beam aperture ±{half_aperture} rad")]
    OutOfBeam { theta: f64, half_aperture: f64 },

    #[error("cell ({i}, {j}) is outside a {width}x{height} grid")]
    IndexOutOfBounds {
        i: i64,
        j: i64,
        width: usize,
        height: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no goal candidate: {0}")]
    NoGoal(&'static str),

    #[error("planning failed after {iterations} iterations")]
    PlanningFailure { iterations: usize },

    #[error("path is in collision at vertex {vertex}")]
    PathInCollision { vertex: usize },

    #[error("non-finite value while differentiating interior vertex {vertex}")]
    Numerical { vertex: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("`{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
