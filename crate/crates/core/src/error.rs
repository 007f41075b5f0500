use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed volume file: {0}")]
    Format(String),
    #[error("empty mask: {0}")]
    EmptyMask(&'static str),
    #[error("expected at most 2 connected components, found {0}")]
    TooManyComponents(usize),
    #[error("phantom geometry infeasible: {0}")]
    Infeasible(String),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_shape(a: [usize; 3], b: [usize; 3]) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(a.to_vec(), b.to_vec()))
    }
}
