//! Coordinate-token losses with hand-derived gradients.
//!
//! The pipeline: softmax over the vocabulary, zero the distribution outside
//! the coordinate range, convolve the surviving slice with a Gaussian
//! kernel, splice the result back, and take the masked mean NLL. Plain
//! cross-entropy and a soft-argmax/MSE regression variant are provided as
//! baselines under the same batch types.

mod config;
mod gkcel;
mod gradcheck;
mod kernel;
mod softargmax;

pub use config::{ConfigError, LossConfig};
pub use gkcel::{
    convolve_range, cross_entropy, cross_entropy_grad, cross_entropy_with_epsilon, gk_cel,
    gk_cel_grad, masked_range_probs, splice, DEFAULT_EPSILON,
};
pub use gradcheck::{fd_grad, run_gradcheck, GradcheckCase, GradcheckConfig, GradcheckReport};
pub use kernel::{build_kernel, GaussianKernel};
pub use softargmax::{softargmax_loss, softargmax_loss_grad};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("non-finite logit at (batch {b}, position {l}, vocab {v})")]
    NonFiniteLogit { b: usize, l: usize, v: usize },
    #[error("mask selects no positions")]
    EmptyBatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("coordinate range end {end} outside vocabulary of size {vocab}")]
    SpecOutOfVocab { end: u32, vocab: usize },
    #[error("kernel size {n} wider than coordinate range of {bins} bins")]
    KernelWiderThanRange { n: usize, bins: usize },
    #[error("kernel size {0} must be odd and >= 3")]
    BadKernelSize(usize),
    #[error("kernel sigma {0} must be positive")]
    BadKernelSigma(f64),
    #[error("target {label} at (batch {b}, position {l}) outside vocabulary of size {vocab}")]
    TargetOutOfVocab { b: usize, l: usize, label: u32, vocab: usize },
    #[error("target {label} at (batch {b}, position {l}) is not a coordinate token")]
    OffRangeTarget { b: usize, l: usize, label: u32 },
    #[error("coordinate range of {0} bins too narrow for soft-argmax (needs >= 2)")]
    RangeTooNarrow(usize),
    #[error("temperature {0} must be positive")]
    BadTemperature(f64),
}

/// Dense `batch x seq x vocab` array of doubles, row-major.
///
/// Used for logits, probability arrays, and gradients alike.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsBatch {
    batch: usize,
    seq: usize,
    vocab: usize,
    pub values: Vec<f64>,
}

impl LogitsBatch {
    pub fn new(batch: usize, seq: usize, vocab: usize, values: Vec<f64>) -> Result<Self, LossError> {
        if values.len() != batch * seq * vocab {
            return Err(LossError::ShapeMismatch(format!(
                "{} values for {batch}x{seq}x{vocab}",
                values.len()
            )));
        }
        Ok(Self { batch, seq, vocab, values })
    }

    pub fn zeros(batch: usize, seq: usize, vocab: usize) -> Self {
        Self { batch, seq, vocab, values: vec![0.0; batch * seq * vocab] }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.batch, self.seq, self.vocab)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn seq(&self) -> usize {
        self.seq
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.batch == other.batch && self.seq == other.seq && self.vocab == other.vocab
    }

    /// Start of the vocabulary row for `(b, l)`.
    fn row_start(&self, b: usize, l: usize) -> usize {
        (b * self.seq + l) * self.vocab
    }

    pub fn row(&self, b: usize, l: usize) -> &[f64] {
        let start = self.row_start(b, l);
        &self.values[start..start + self.vocab]
    }

    pub fn row_mut(&mut self, b: usize, l: usize) -> &mut [f64] {
        let start = self.row_start(b, l);
        &mut self.values[start..start + self.vocab]
    }

    pub fn get(&self, b: usize, l: usize, v: usize) -> f64 {
        self.values[self.row_start(b, l) + v]
    }

    pub fn set(&mut self, b: usize, l: usize, v: usize, x: f64) {
        let i = self.row_start(b, l) + v;
        self.values[i] = x;
    }

    pub(crate) fn ensure_finite(&self) -> Result<(), LossError> {
        for b in 0..self.batch {
            for l in 0..self.seq {
                if let Some(v) = self.row(b, l).iter().position(|x| !x.is_finite()) {
                    return Err(LossError::NonFiniteLogit { b, l, v });
                }
            }
        }
        Ok(())
    }
}

/// Target labels and the loss mask, both `batch x seq`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBatch {
    batch: usize,
    seq: usize,
    pub labels: Vec<u32>,
    pub mask: Vec<bool>,
}

impl TargetBatch {
    pub fn new(batch: usize, seq: usize, labels: Vec<u32>, mask: Vec<bool>) -> Result<Self, LossError> {
        if labels.len() != batch * seq || mask.len() != batch * seq {
            return Err(LossError::ShapeMismatch(format!(
                "{} labels / {} mask entries for {batch}x{seq}",
                labels.len(),
                mask.len()
            )));
        }
        Ok(Self { batch, seq, labels, mask })
    }

    /// All-true mask over the given labels.
    pub fn dense(batch: usize, seq: usize, labels: Vec<u32>) -> Result<Self, LossError> {
        let mask = vec![true; labels.len()];
        Self::new(batch, seq, labels, mask)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn seq(&self) -> usize {
        self.seq
    }

    pub fn label(&self, b: usize, l: usize) -> u32 {
        self.labels[b * self.seq + l]
    }

    pub fn masked(&self, b: usize, l: usize) -> bool {
        self.mask[b * self.seq + l]
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Summary of one loss evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossDiagnostics {
    /// Positions that entered the mean.
    pub masked_positions: usize,
    /// Positions whose floored probability hit the epsilon floor.
    pub floored_positions: usize,
    /// Mean (over masked positions) total probability inside the
    /// coordinate range before convolution. None for losses that never
    /// look at the range.
    pub mean_range_mass_before: Option<f64>,
    /// Same mass after convolution; the gap is what zero padding ate.
    pub mean_range_mass_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Option<LogitsBatch>,
    pub diagnostics: LossDiagnostics,
}
