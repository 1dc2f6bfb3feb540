//! Document-parsing toolkit: coordinate-token codec, range-smoothed
//! coordinate losses with hand-derived gradients, LaTeX standardization,
//! evaluation metrics, and a desk-scale toy decoder for loss comparisons.
//!
//! Everything here is deterministic given explicit seeds; nothing spawns
//! threads or touches global state.

pub mod coord;
pub mod latex;
pub mod loss;
pub mod metrics;
pub mod toy;

pub use coord::{BBox, CoordSpec, LabelMap, LayoutElement, TokenSequence};
pub use latex::RuleSet;
pub use loss::{LogitsBatch, LossOutput, TargetBatch};
