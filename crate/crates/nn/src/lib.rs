//! Minimal reverse-mode autodiff over single-sample `[C, D, H, W]` tensors and
//! the segmentation networks built on it.

pub mod checkpoint;
pub mod direct;
pub mod dropblock;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod mcdo;
pub mod nets;
pub mod optim;
pub mod params;
pub mod tensor;

pub use dropblock::{DropBlockConfig, DropMode};
pub use error::{NnError, Result};
pub use graph::{Graph, NodeId};
pub use nets::{build_agmtn, build_localizer, build_organ_net, BlockKind, Model, NetConfig, NetRole};
pub use params::{Grads, Init, ParamId, ParamStore};
pub use tensor::Tensor;
