//! Desk-scale training bench: synthetic box scenes, a tiny hand-backprop
//! autoregressive decoder, and paired-objective training runs that make
//! the coordinate losses comparable under label noise.
//!
//! One decoder serves two tasks, switched by the first token: detection
//! sequences (class + four coordinate tokens per element) and short text
//! sequences (two characters per element). Position 0 carries a learned
//! projection of the raster grid; everything after is token-embedded.

mod decoder;
mod eval;
mod scene;
mod train;

pub use decoder::{TinyDecoder, TinyDecoderConfig};
pub use eval::{decode_layout_constrained, evaluate_toy, EvalSummary};
pub use scene::{generate_scene, perturb_labels, NoiseSpec, SyntheticScene, ToySceneConfig};
pub use train::{
    build_dataset, train, Objective, OptimizerConfig, TaskKind, ToyDataset, ToyExample, TrainReport,
};

use thiserror::Error;

use crate::coord::{CoordError, CoordSpec, LabelMap};
use crate::loss::LossError;

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("bad scene config: {0}")]
    BadSceneConfig(String),
    #[error("bad decoder config: {0}")]
    BadDecoderConfig(String),
    #[error("sequence length {len} exceeds max_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("bad decoder input: {0}")]
    BadInput(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("dataset has no examples")]
    EmptyDataset,
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Coord(#[from] CoordError),
}

/// Fixed vocabulary layout. Coordinate tokens sit in one contiguous
/// range so the range-smoothed losses apply to them and only them.
pub mod vocab {
    pub const EOS: u32 = 0;
    pub const TASK_DET: u32 = 1;
    pub const TASK_TEXT: u32 = 2;
    /// Three element classes.
    pub const CLASS_BASE: u32 = 3;
    pub const NUM_CLASSES: u32 = 3;
    /// Six text characters: a b c (class), s m l (size).
    pub const CHAR_BASE: u32 = 6;
    pub const NUM_CHARS: u32 = 6;
    /// Coordinate bins start here; one per grid boundary.
    pub const COORD_BASE: u32 = 12;
}

pub const CLASS_NAMES: [&str; 3] = ["solid", "checker", "hollow"];

/// Vocabulary size for a given grid: `grid + 1` boundary bins after the
/// fixed prefix (45 for the default 32-cell grid).
pub fn vocab_size(grid: usize) -> usize {
    vocab::COORD_BASE as usize + grid + 1
}

/// Coordinate token range for a given grid. Cell boundaries k/grid map
/// to bins exactly, so clean labels round-trip without error.
pub fn coord_spec(grid: usize) -> CoordSpec {
    CoordSpec::with_bins_at(grid + 1, vocab::COORD_BASE).expect("valid by construction")
}

pub fn label_map() -> LabelMap {
    LabelMap::new(
        vocab::EOS,
        CLASS_NAMES
            .iter()
            .enumerate()
            .map(|(i, name)| (name.to_string(), vocab::CLASS_BASE + i as u32)),
    )
    .expect("fixed map is valid")
}
