//! Probabilistic proposal-free instance segmentation.
//!
//! The crate covers the full post-network pipeline: metric-learning losses
//! with exact gradients, mean-shift post-processing of embedding maps into
//! instance masks, fusion of posterior draws into per-instance pixel
//! probabilities, entropy-based uncertainty metrics on image patches,
//! benchmark evaluation, and a guided-proofreading simulation. A seeded
//! synthetic generator stands in for the trained network so the whole
//! pipeline runs end-to-end without model weights.

pub mod agglomeration;
pub mod clustering;
pub mod error;
pub mod evaluation;
pub mod grid;
pub mod losses;
pub mod mask;
pub mod maps;
pub mod proofreading;
pub mod seed;
pub mod synthetic;
pub mod uncertainty;

pub use error::{Error, Result};
pub use grid::{Grid2D, Mask};
pub use mask::{connected_components, iou, masks_from_labelmap, Connectivity, InstanceMasks};
pub use maps::{
    EmbeddingMap, ProbabilisticInstanceMap, SemanticClass, SemanticMap, UncertaintyMap,
};
