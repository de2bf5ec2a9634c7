use thiserror::Error;

/// Errors produced across the upsampling pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("block contains no points")]
    EmptyBlock,
    #[error("no samples to fit or interpolate from")]
    EmptySamples,
    #[error("every candidate basis function vanishes on the sample set")]
    DegenerateBasis,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("PLY parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("point {index} has no color")]
    MissingColor { index: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(offset: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            reason: reason.into(),
        }
    }
}
