//! Dataset assembly and the training loop.
//!
//! Every objective sees the same dataset in the same order and starts
//! from the same seeded initialization, so paired runs differ only in
//! the loss applied to the logits. Detection sequences carry noisy
//! coordinate labels; the clean scenes are kept alongside for
//! evaluation.

use std::iter::once;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::coord::{encode_layout, CoordSpec, LabelMap};
use crate::loss::{
    build_kernel, cross_entropy_grad, gk_cel_grad, softargmax_loss_grad, GaussianKernel,
    LogitsBatch, LossConfig, LossDiagnostics, LossError, LossOutput, TargetBatch,
};

use super::scene::text_sequence;
use super::{
    coord_spec, evaluate_toy, label_map, vocab, EvalSummary, NoiseSpec, SyntheticScene,
    TinyDecoder, TinyDecoderConfig, ToyError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    CrossEntropy,
    GkCel,
    SoftArgmax,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::CrossEntropy, Objective::GkCel, Objective::SoftArgmax];

    pub fn name(&self) -> &'static str {
        match self {
            Objective::CrossEntropy => "ce",
            Objective::GkCel => "gk-cel",
            Objective::SoftArgmax => "soft-argmax",
        }
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "ce" | "crossentropy" => Ok(Objective::CrossEntropy),
            "gkcel" | "gk" => Ok(Objective::GkCel),
            "softargmax" | "sa" => Ok(Objective::SoftArgmax),
            _ => Err(format!("unknown objective {s:?}; expected ce, gk-cel, or soft-argmax")),
        }
    }
}

/// Plain SGD with momentum, one example per step.
///
/// `lr_decay` multiplies the learning rate once per epoch (1.0 leaves
/// it constant). It is a global schedule, not a per-parameter scale:
/// batch-1 SGD orbits an optimum where per-example gradients disagree,
/// and annealing collapses that orbit so the final parameters sit at
/// the average optimum instead of wherever the orbit stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub lr_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { learning_rate: 0.05, momentum: 0.9, epochs: 60, lr_decay: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Detection,
    Text,
}

/// One training sequence: raster conditioning, shifted inputs, and
/// per-position targets with the task token masked out.
pub struct ToyExample {
    pub cells: Vec<f64>,
    pub input_tokens: Vec<u32>,
    pub targets: TargetBatch,
    pub kind: TaskKind,
    pub scene: usize,
}

impl ToyExample {
    fn from_sequence(cells: Vec<f64>, s: &[u32], kind: TaskKind, scene: usize) -> Result<Self, ToyError> {
        Self::from_pair(cells, s, s, kind, scene)
    }

    /// Conditioning and supervision may disagree: the model reads
    /// `input_seq` but is scored against `target_seq`.
    fn from_pair(
        cells: Vec<f64>,
        input_seq: &[u32],
        target_seq: &[u32],
        kind: TaskKind,
        scene: usize,
    ) -> Result<Self, ToyError> {
        if input_seq.len() < 2 {
            return Err(ToyError::BadInput("a sequence needs a task token and an end token".into()));
        }
        if input_seq.len() != target_seq.len() {
            return Err(ToyError::BadInput("input and target sequences differ in length".into()));
        }
        let len = input_seq.len();
        let mut mask = vec![true; len];
        mask[0] = false;
        let targets = TargetBatch::new(1, len, target_seq.to_vec(), mask)?;
        Ok(Self { cells, input_tokens: input_seq[..len - 1].to_vec(), targets, kind, scene })
    }

    /// Longest forward pass this example needs (conditioning slot included).
    pub fn positions(&self) -> usize {
        self.input_tokens.len() + 1
    }
}

pub struct ToyDataset {
    pub examples: Vec<ToyExample>,
    /// Clean scenes, indexed by `ToyExample::scene`.
    pub scenes: Vec<SyntheticScene>,
    pub spec: CoordSpec,
    pub labels: LabelMap,
}

/// Builds the training set: per scene, `replicas` detection examples
/// with independent noise draws, each followed by the scene's text
/// sequence, so the two tasks interleave 1:1. Detection replicas are
/// teacher-forced on their own noisy draw, the way a real pipeline
/// trains on its noisy annotations: the draw is both conditioning and
/// supervision.
pub fn build_dataset(
    scenes: Vec<SyntheticScene>,
    noise: &NoiseSpec,
    replicas: usize,
    seed: u64,
) -> Result<ToyDataset, ToyError> {
    if scenes.is_empty() || replicas == 0 {
        return Err(ToyError::EmptyDataset);
    }
    let grid = scenes[0].grid;
    if scenes.iter().any(|s| s.grid != grid) {
        return Err(ToyError::BadSceneConfig("scenes mix grid sizes".into()));
    }
    let spec = coord_spec(grid);
    let labels = label_map();
    let mut examples = Vec::with_capacity(scenes.len() * replicas * 2);
    for (si, scene) in scenes.iter().enumerate() {
        let cells = scene.cells_f64();
        let det_clean: Vec<u32> = once(vocab::TASK_DET)
            .chain(encode_layout(&scene.elements, &spec, &labels)?.tokens)
            .collect();
        let text = text_sequence(scene);
        for r in 0..replicas {
            let draw = (si * replicas + r) as u64;
            let noise_seed = seed ^ draw.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let noisy = super::perturb_labels(&det_clean, &spec, noise, noise_seed)?;
            examples.push(ToyExample::from_sequence(cells.clone(), &noisy, TaskKind::Detection, si)?);
            examples.push(ToyExample::from_sequence(cells.clone(), &text, TaskKind::Text, si)?);
        }
    }
    Ok(ToyDataset { examples, scenes, spec, labels })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub objective: String,
    pub seed: u64,
    pub epochs: usize,
    pub examples: usize,
    /// Mean weighted loss per epoch; one entry per epoch.
    pub loss_curve: Vec<f64>,
    pub eval: EvalSummary,
    /// Informational only, never serialized: it would break run-to-run
    /// byte equality of reports.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

/// Parameters past this magnitude count as diverged. The floored
/// losses saturate instead of overflowing, so runaway growth has to be
/// caught on the parameters, and the limit must sit far below the
/// f64 overflow horizon: attention scores multiply four parameter
/// factors, so scores overflow once parameters reach roughly 1e77.
const PARAM_LIMIT: f64 = 1e30;

/// Trains a fresh decoder on the dataset and returns it together with
/// the report. The coordinate range always comes from the dataset's
/// grid; the config's optional range override is a concern of callers
/// that build logits without a dataset.
pub fn train(
    dataset: &ToyDataset,
    objective: Objective,
    decoder_cfg: &TinyDecoderConfig,
    optim: &OptimizerConfig,
    loss_cfg: &LossConfig,
) -> Result<(TinyDecoder, TrainReport), ToyError> {
    if dataset.examples.is_empty() {
        return Err(ToyError::EmptyDataset);
    }
    if dataset.spec.end_index as usize >= decoder_cfg.vocab {
        return Err(ToyError::BadDecoderConfig(format!(
            "vocab {} does not cover coordinate tokens up to {}",
            decoder_cfg.vocab, dataset.spec.end_index
        )));
    }
    let start = Instant::now();
    let kernel = build_kernel(loss_cfg.kernel_size, loss_cfg.sigma, loss_cfg.normalized)?;
    let mut model = TinyDecoder::new(*decoder_cfg)?;
    let mut grads = model.zero_grads();
    let mut velocity = model.zero_grads();
    let mut curve = Vec::with_capacity(optim.epochs);
    let mut step = 0usize;
    let mut last_loss = f64::INFINITY;
    let mut lr = optim.learning_rate;
    for _ in 0..optim.epochs {
        let mut epoch_loss = 0.0;
        for ex in &dataset.examples {
            let out = step_loss(&model, ex, objective, dataset, &kernel, loss_cfg);
            let (loss, grad_logits, cache) = match out {
                Ok(v) => v,
                Err(e) => return Err(divergence_or(e, &model, step, last_loss)),
            };
            if !loss.is_finite() {
                return Err(ToyError::Diverged { step, loss });
            }
            last_loss = loss;
            epoch_loss += loss;
            grads.fill(0.0);
            model.backward(&cache, &grad_logits, &mut grads);
            for ((pv, vv), g) in model.params.iter_mut().zip(&mut velocity).zip(&grads) {
                *vv = optim.momentum * *vv - lr * g;
                *pv += *vv;
            }
            step += 1;
        }
        lr *= optim.lr_decay;
        if !params_healthy(&model) {
            return Err(ToyError::Diverged { step, loss: last_loss });
        }
        curve.push(epoch_loss / dataset.examples.len() as f64);
    }
    let eval = evaluate_toy(&model, &dataset.scenes, &dataset.spec, &dataset.labels)?;
    let report = TrainReport {
        objective: objective.name().to_string(),
        seed: decoder_cfg.seed,
        epochs: optim.epochs,
        examples: dataset.examples.len(),
        loss_curve: curve,
        eval,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

fn params_healthy(model: &TinyDecoder) -> bool {
    model.params.iter().all(|p| p.is_finite() && p.abs() <= PARAM_LIMIT)
}

/// A mid-training error is a divergence if the parameters have already
/// blown up; anything else propagates as-is.
fn divergence_or(e: ToyError, model: &TinyDecoder, step: usize, last_loss: f64) -> ToyError {
    if !params_healthy(model) {
        return ToyError::Diverged { step, loss: last_loss };
    }
    e
}

type StepOutput = (f64, LogitsBatch, super::decoder::Cache);

fn step_loss(
    model: &TinyDecoder,
    ex: &ToyExample,
    objective: Objective,
    dataset: &ToyDataset,
    kernel: &GaussianKernel,
    loss_cfg: &LossConfig,
) -> Result<StepOutput, ToyError> {
    let (logits, cache) = model.forward(&ex.cells, &ex.input_tokens)?;
    let out = match objective {
        Objective::CrossEntropy => cross_entropy_grad(&logits, &ex.targets)?,
        Objective::GkCel => gk_cel_grad(&logits, &ex.targets, &dataset.spec, kernel, loss_cfg.epsilon)?,
        Objective::SoftArgmax => composite_softargmax(&logits, &ex.targets, &dataset.spec)?,
    };
    let weight = match ex.kind {
        TaskKind::Detection => loss_cfg.weight_detection,
        TaskKind::Text => loss_cfg.weight_text,
    };
    let mut grad = out.grad.expect("grad requested");
    if weight != 1.0 {
        for v in &mut grad.values {
            *v *= weight;
        }
    }
    Ok((weight * out.loss, grad, cache))
}

/// Regression on coordinate positions, cross-entropy everywhere else,
/// averaged so each masked position contributes 1/N to the total. That
/// keeps its loss curve on the same per-position scale as the other
/// objectives.
fn composite_softargmax(
    logits: &LogitsBatch,
    targets: &TargetBatch,
    spec: &CoordSpec,
) -> Result<LossOutput, ToyError> {
    let (batch, seq) = (targets.batch(), targets.seq());
    let mut coord_mask = Vec::with_capacity(batch * seq);
    let mut other_mask = Vec::with_capacity(batch * seq);
    for b in 0..batch {
        for l in 0..seq {
            let coord = targets.masked(b, l) && spec.contains(targets.label(b, l));
            coord_mask.push(coord);
            other_mask.push(targets.masked(b, l) && !coord);
        }
    }
    let n_coord = coord_mask.iter().filter(|&&m| m).count();
    let n_other = other_mask.iter().filter(|&&m| m).count();
    let mut loss = 0.0;
    let mut grad = logits.zeros_like();
    let mut merge = |part: LossOutput, n: usize| {
        loss += part.loss * n as f64;
        let pg = part.grad.expect("grad requested");
        for (gv, pv) in grad.values.iter_mut().zip(&pg.values) {
            *gv += pv * n as f64;
        }
    };
    if n_coord > 0 {
        let part = TargetBatch::new(batch, seq, targets.labels.clone(), coord_mask)?;
        merge(softargmax_loss_grad(logits, &part, spec, 1.0, 1.0)?, n_coord);
    }
    if n_other > 0 {
        let part = TargetBatch::new(batch, seq, targets.labels.clone(), other_mask)?;
        merge(cross_entropy_grad(logits, &part)?, n_other);
    }
    let n = n_coord + n_other;
    if n == 0 {
        return Err(LossError::EmptyBatch.into());
    }
    let inv = 1.0 / n as f64;
    loss *= inv;
    for gv in &mut grad.values {
        *gv *= inv;
    }
    Ok(LossOutput {
        loss,
        grad: Some(grad),
        diagnostics: LossDiagnostics {
            masked_positions: n,
            floored_positions: 0,
            mean_range_mass_before: None,
            mean_range_mass_after: None,
        },
    })
}
