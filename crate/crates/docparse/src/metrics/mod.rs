//! Evaluation metrics: sequence scores (edit distance, BLEU, ExpRate,
//! compile success rate), detection scores (IoU matching, P/R/F1, the
//! max-F1 confidence sweep), table-cell F1, and throughput accounting.
//!
//! Scoring is pure and deterministic; only [`csr`](csr::csr) shells out
//! (to a LaTeX compiler) and only [`fps_measure`](fps::fps_measure) reads
//! the clock.

mod csr;
mod detection;
mod fps;
mod sequence;
mod table;

pub use csr::{csr, CsrOutcome, CsrSample};
pub use detection::{
    iou, match_detections, max_f1_sweep, prf1, MatchResult, MatchedPair, Prf1, ScoredDetection,
    SweepResult,
};
pub use fps::{fps_measure, FpsReport};
pub use sequence::{
    bleu, edit_distance, edit_distance_chars, exp_rate, normalized_edit_distance, BleuScore,
};
pub use table::{extract_table_cells, table_cell_f1, TableCellScore};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction and reference counts differ: {preds} vs {refs}")]
    LengthMismatch { preds: usize, refs: usize },
    #[error("confidence-threshold sweep needs a confidence on every prediction; use plain prf1 for generative outputs")]
    ConfidencesAbsent,
    #[error("confidence {0} outside [0, 1]")]
    BadConfidence(f64),
    #[error("no tabular-like environment found")]
    NoTableEnvironment,
    #[error("threshold list is empty")]
    EmptyThresholds,
}

/// One flat report row; subcommands fill the fields they compute.
///
/// `f1` always equals `2PR/(P+R)` (0 when `P+R = 0`) because it is only
/// ever produced through [`prf1`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    /// Mean per-pair BLEU.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    /// Summed Levenshtein distance over all pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edit_distance: Option<u64>,
    /// Mean per-pair distance divided by the longer length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_edit_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exp_rate: Option<f64>,
    /// Absent when the external compiler is unavailable; never silently 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdProvenance>,
}

/// Records where the operating threshold of a detection score came from.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdProvenance {
    pub iou_threshold: f64,
    /// "default", "flag", or "sweep".
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence_threshold: Option<f64>,
}
