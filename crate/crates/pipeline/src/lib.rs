//! Training, three-stage inference, the variant ablation and overlay
//! rendering for pelvic CTV segmentation, plus the `ctvseg` command line.

pub mod ablation;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod infer;
pub mod overlay;
pub mod trainer;
pub mod workflow;

pub use config::{Config, PipelineConfig, TrainConfig, VoiSizes};
pub use data::{CaseData, DatasetSplits, VoiSample};
pub use error::{PipelineError, Result};
pub use infer::{infer, infer_with, CaseResult, InferOptions, Networks, Stage};
pub use trainer::{train_ctv, train_localizer, train_organ, CtvVariant, TrainReport};
