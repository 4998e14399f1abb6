use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input cloud")]
    EmptyCloud,

    #[error("non-finite coordinate in input")]
    NonFinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimMismatch { expected: [usize; 3], got: [usize; 3] },

    #[error("empty mesh")]
    EmptyMesh,

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("object not visible")]
    NotVisible,

    #[error("gradient overflow")]
    GradientOverflow,

    #[error("step too large")]
    StepTooLarge,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for failures caused by numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::GradientOverflow | Error::StepTooLarge | Error::DegenerateFit(_)
        )
    }
}
