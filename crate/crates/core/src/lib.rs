//! Core types and algorithms for three-stage pelvic CTV segmentation:
//! volumes and the MIVOL file format, a deterministic synthetic phantom,
//! preprocessing, Dice-family losses with analytic gradients, exact distance
//! transforms, evaluation metrics, and Monte-Carlo dropout summaries.

pub mod components;
pub mod disttf;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod mivol;
pub mod phantom;
pub mod preprocess;
pub mod rng;
pub mod structure;
pub mod uncertainty;
pub mod volume;

pub use error::{Error, Result};
pub use rng::CounterRng;
pub use structure::{StructureId, StructureSet};
pub use volume::{Mask, Shape, Spacing, Voi, Volume};
