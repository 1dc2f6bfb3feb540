//! Finite-difference gradient verification.
//!
//! The oracle touches only forward loss values: central differences with a
//! fixed step, compared entry-wise against the hand-derived gradients under
//! a floored relative error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coord::CoordSpec;

use super::gkcel::{cross_entropy, cross_entropy_grad, gk_cel, gk_cel_grad, DEFAULT_EPSILON};
use super::kernel::build_kernel;
use super::softargmax::{softargmax_loss, softargmax_loss_grad};
use super::{LogitsBatch, TargetBatch};

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckConfig {
    /// Randomized instances per loss.
    pub instances: usize,
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed floored relative error.
    pub tolerance: f64,
    pub seed: u64,
    /// Negative control: negate the analytic gradient before comparing.
    /// A healthy suite must then fail.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub inject_sign_flip: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { instances: 100, step: 1e-5, tolerance: 1e-4, seed: 0, inject_sign_flip: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckCase {
    pub loss: String,
    pub batch: usize,
    pub seq: usize,
    pub vocab: usize,
    pub range_start: u32,
    pub range_end: u32,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub config: GradcheckConfig,
    pub cases: Vec<GradcheckCase>,
    pub worst_rel_err: f64,
    pub passed: bool,
}

/// Central finite differences of a scalar loss with respect to every logit.
pub fn fd_grad(f: &mut dyn FnMut(&LogitsBatch) -> f64, logits: &LogitsBatch, step: f64) -> LogitsBatch {
    let mut probe = logits.clone();
    let mut out = logits.zeros_like();
    for i in 0..logits.values.len() {
        let orig = probe.values[i];
        probe.values[i] = orig + step;
        let hi = f(&probe);
        probe.values[i] = orig - step;
        let lo = f(&probe);
        probe.values[i] = orig;
        out.values[i] = (hi - lo) / (2.0 * step);
    }
    out
}

fn max_rel_err(analytic: &LogitsBatch, fd: &LogitsBatch) -> f64 {
    analytic
        .values
        .iter()
        .zip(&fd.values)
        .map(|(&a, &f)| (a - f).abs() / a.abs().max(f.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

struct Instance {
    logits: LogitsBatch,
    targets: TargetBatch,
    spec: CoordSpec,
}

fn sample_instance(rng: &mut ChaCha8Rng, coord_targets_only: bool) -> Instance {
    let batch = rng.gen_range(1..=3);
    let seq = rng.gen_range(1..=5);
    let vocab = rng.gen_range(10..=24);
    let bins = rng.gen_range(4..=8);
    let start = rng.gen_range(0..=(vocab - bins)) as u32;
    let spec = CoordSpec::with_bins_at(bins, start).unwrap();
    let values = (0..batch * seq * vocab).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let logits = LogitsBatch::new(batch, seq, vocab, values).unwrap();
    let mut labels = Vec::with_capacity(batch * seq);
    let mut mask = Vec::with_capacity(batch * seq);
    for _ in 0..batch * seq {
        let coord = coord_targets_only || rng.gen_bool(0.5);
        let label = if coord {
            rng.gen_range(spec.start_index..=spec.end_index)
        } else {
            // Rejection-sample an off-range token.
            loop {
                let t = rng.gen_range(0..vocab as u32);
                if !spec.contains(t) {
                    break t;
                }
            }
        };
        labels.push(label);
        mask.push(rng.gen_bool(0.8));
    }
    if mask.iter().all(|&m| !m) {
        mask[0] = true;
    }
    let targets = TargetBatch::new(batch, seq, labels, mask).unwrap();
    Instance { logits, targets, spec }
}

/// Runs the randomized suite for all three losses.
pub fn run_gradcheck(config: &GradcheckConfig) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cases = Vec::with_capacity(config.instances * 3);
    let flip = if config.inject_sign_flip { -1.0 } else { 1.0 };

    for i in 0..config.instances {
        let inst = sample_instance(&mut rng, false);
        let sizes: Vec<usize> = [3, 5, 7].into_iter().filter(|&n| n <= inst.spec.bins).collect();
        let n = sizes[rng.gen_range(0..sizes.len())];
        let sigma = rng.gen_range(0.4..2.0);
        let kernel = build_kernel(n, sigma, i % 2 == 0).unwrap();
        let mut analytic = gk_cel_grad(&inst.logits, &inst.targets, &inst.spec, &kernel, DEFAULT_EPSILON)
            .expect("valid instance")
            .grad
            .expect("grad requested");
        for v in &mut analytic.values {
            *v *= flip;
        }
        let fd = fd_grad(
            &mut |z| {
                gk_cel(z, &inst.targets, &inst.spec, &kernel, DEFAULT_EPSILON)
                    .expect("valid instance")
                    .loss
            },
            &inst.logits,
            config.step,
        );
        cases.push(GradcheckCase {
            loss: "gk_cel".to_string(),
            batch: inst.logits.batch(),
            seq: inst.logits.seq(),
            vocab: inst.logits.vocab(),
            range_start: inst.spec.start_index,
            range_end: inst.spec.end_index,
            max_rel_err: max_rel_err(&analytic, &fd),
        });
    }

    for _ in 0..config.instances {
        let inst = sample_instance(&mut rng, false);
        let mut analytic = cross_entropy_grad(&inst.logits, &inst.targets)
            .expect("valid instance")
            .grad
            .expect("grad requested");
        for v in &mut analytic.values {
            *v *= flip;
        }
        let fd = fd_grad(
            &mut |z| cross_entropy(z, &inst.targets).expect("valid instance").loss,
            &inst.logits,
            config.step,
        );
        cases.push(GradcheckCase {
            loss: "cross_entropy".to_string(),
            batch: inst.logits.batch(),
            seq: inst.logits.seq(),
            vocab: inst.logits.vocab(),
            range_start: inst.spec.start_index,
            range_end: inst.spec.end_index,
            max_rel_err: max_rel_err(&analytic, &fd),
        });
    }

    for _ in 0..config.instances {
        let inst = sample_instance(&mut rng, true);
        let temperature = rng.gen_range(0.5..2.0);
        let weight = rng.gen_range(0.5..2.0);
        let mut analytic =
            softargmax_loss_grad(&inst.logits, &inst.targets, &inst.spec, temperature, weight)
                .expect("valid instance")
                .grad
                .expect("grad requested");
        for v in &mut analytic.values {
            *v *= flip;
        }
        let fd = fd_grad(
            &mut |z| {
                softargmax_loss(z, &inst.targets, &inst.spec, temperature, weight)
                    .expect("valid instance")
                    .loss
            },
            &inst.logits,
            config.step,
        );
        cases.push(GradcheckCase {
            loss: "softargmax".to_string(),
            batch: inst.logits.batch(),
            seq: inst.logits.seq(),
            vocab: inst.logits.vocab(),
            range_start: inst.spec.start_index,
            range_end: inst.spec.end_index,
            max_rel_err: max_rel_err(&analytic, &fd),
        });
    }

    let worst = cases.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    GradcheckReport { config: config.clone(), cases, worst_rel_err: worst, passed: worst < config.tolerance }
}
