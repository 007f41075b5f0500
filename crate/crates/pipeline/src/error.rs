use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad input data: {0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] ctvseg_core::Error),
    #[error(transparent)]
    Nn(#[from] ctvseg_nn::NnError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
}

impl PipelineError {
    /// True for problems with the caller's inputs (missing or malformed
    /// files, inconsistent data) as opposed to failures while computing.
    pub fn is_data_error(&self) -> bool {
        use ctvseg_core::Error as C;
        use ctvseg_nn::NnError as N;
        match self {
            Self::Config(_) | Self::Data(_) | Self::Io(_) | Self::Json(_) | Self::Toml(_) | Self::Csv(_) => true,
            Self::Core(e) | Self::Nn(N::Core(e)) => matches!(
                e,
                C::Format(_) | C::Io(_) | C::Json(_) | C::ShapeMismatch(..) | C::InvalidArgument(_)
            ),
            Self::Nn(N::Checkpoint(_) | N::Io(_) | N::Json(_) | N::Config(_)) => true,
            _ => false,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
