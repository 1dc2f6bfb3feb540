//! Range-smoothed cross-entropy and its plain baseline.
//!
//! The smoothed loss never renormalizes the spliced distribution, and the
//! convolution zero-pads outside the coordinate range, so probability mass
//! from non-coordinate tokens never leaks into coordinate bins.

use crate::coord::CoordSpec;

use super::kernel::GaussianKernel;
use super::{LogitsBatch, LossDiagnostics, LossError, LossOutput, TargetBatch};

/// Floor inside the log; guards targets the convolution left at zero.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Stable softmax of one vocabulary row.
fn softmax_row(z: &[f64], out: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(z) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Per-position NLL with the epsilon floor.
///
/// Writes `scale * (p - onehot(t))` into `grad_row` unless the floor is
/// active, in which case the position contributes zero gradient (the loss
/// is locally constant there). Both the smoothed loss (off-range targets)
/// and the plain baseline go through this exact function so their results
/// agree bitwise.
fn ce_position(
    p_row: &[f64],
    t: usize,
    epsilon: f64,
    scale: f64,
    grad_row: Option<&mut [f64]>,
) -> (f64, bool) {
    let pt = p_row[t];
    let floored = pt <= epsilon;
    let loss = -pt.max(epsilon).ln();
    if let Some(g) = grad_row {
        if !floored {
            for (gv, &pv) in g.iter_mut().zip(p_row) {
                *gv = pv * scale;
            }
            g[t] -= scale;
        }
    }
    (loss, floored)
}

fn check_shapes(logits: &LogitsBatch, targets: &TargetBatch) -> Result<(), LossError> {
    if logits.batch() != targets.batch() || logits.seq() != targets.seq() {
        return Err(LossError::ShapeMismatch(format!(
            "logits {}x{} vs targets {}x{}",
            logits.batch(),
            logits.seq(),
            targets.batch(),
            targets.seq()
        )));
    }
    Ok(())
}

fn check_spec(spec: &CoordSpec, vocab: usize) -> Result<(), LossError> {
    if spec.end_index as usize >= vocab {
        return Err(LossError::SpecOutOfVocab { end: spec.end_index, vocab });
    }
    Ok(())
}

fn check_targets(logits: &LogitsBatch, targets: &TargetBatch) -> Result<usize, LossError> {
    let mut n = 0;
    for b in 0..targets.batch() {
        for l in 0..targets.seq() {
            if !targets.masked(b, l) {
                continue;
            }
            n += 1;
            let label = targets.label(b, l);
            if label as usize >= logits.vocab() {
                return Err(LossError::TargetOutOfVocab { b, l, label, vocab: logits.vocab() });
            }
        }
    }
    if n == 0 {
        return Err(LossError::EmptyBatch);
    }
    Ok(n)
}

/// Softmax over the vocabulary axis, and the same distribution with
/// everything outside `[s, e]` zeroed.
pub fn masked_range_probs(
    logits: &LogitsBatch,
    spec: &CoordSpec,
) -> Result<(LogitsBatch, LogitsBatch), LossError> {
    logits.ensure_finite()?;
    check_spec(spec, logits.vocab())?;
    let mut p = logits.zeros_like();
    for b in 0..logits.batch() {
        for l in 0..logits.seq() {
            softmax_row(logits.row(b, l), p.row_mut(b, l));
        }
    }
    let mut pprime = p.clone();
    let (s, e) = (spec.start_index as usize, spec.end_index as usize);
    for b in 0..logits.batch() {
        for l in 0..logits.seq() {
            let row = pprime.row_mut(b, l);
            for (v, x) in row.iter_mut().enumerate() {
                if v < s || v > e {
                    *x = 0.0;
                }
            }
        }
    }
    Ok((p, pprime))
}

/// Correlates the range slice with the kernel, zero-padding outside
/// `[s, e]`. The result is zero outside the range.
pub fn convolve_range(
    pprime: &LogitsBatch,
    kernel: &GaussianKernel,
    spec: &CoordSpec,
) -> Result<LogitsBatch, LossError> {
    check_spec(spec, pprime.vocab())?;
    if kernel.size() > spec.bins {
        return Err(LossError::KernelWiderThanRange { n: kernel.size(), bins: spec.bins });
    }
    let (s, e) = (spec.start_index as usize, spec.end_index as usize);
    let c = kernel.center();
    let w = kernel.weights();
    let mut out = pprime.zeros_like();
    for b in 0..pprime.batch() {
        for l in 0..pprime.seq() {
            let src = pprime.row(b, l).to_vec();
            let dst = out.row_mut(b, l);
            for k in s..=e {
                let mut acc = 0.0;
                for (i, &wi) in w.iter().enumerate() {
                    // Source index k + i - c, kept only inside [s, e].
                    let idx = k + i;
                    if idx >= c + s && idx <= c + e {
                        acc += wi * src[idx - c];
                    }
                }
                dst[k] = acc;
            }
        }
    }
    Ok(out)
}

/// Copies `c` over `p` inside `[s, e]`; everything else is `p` exactly.
pub fn splice(
    p: &LogitsBatch,
    c: &LogitsBatch,
    spec: &CoordSpec,
) -> Result<LogitsBatch, LossError> {
    if !p.same_shape(c) {
        return Err(LossError::ShapeMismatch(format!(
            "p {}x{}x{} vs c {}x{}x{}",
            p.batch(),
            p.seq(),
            p.vocab(),
            c.batch(),
            c.seq(),
            c.vocab()
        )));
    }
    check_spec(spec, p.vocab())?;
    let (s, e) = (spec.start_index as usize, spec.end_index as usize);
    let mut out = p.clone();
    for b in 0..p.batch() {
        for l in 0..p.seq() {
            let src = c.row(b, l);
            let dst = out.row_mut(b, l);
            dst[s..=e].copy_from_slice(&src[s..=e]);
        }
    }
    Ok(out)
}

fn gk_impl(
    logits: &LogitsBatch,
    targets: &TargetBatch,
    spec: &CoordSpec,
    kernel: &GaussianKernel,
    epsilon: f64,
    want_grad: bool,
) -> Result<LossOutput, LossError> {
    check_shapes(logits, targets)?;
    logits.ensure_finite()?;
    check_spec(spec, logits.vocab())?;
    if kernel.size() > spec.bins {
        return Err(LossError::KernelWiderThanRange { n: kernel.size(), bins: spec.bins });
    }
    let n = check_targets(logits, targets)?;
    let inv_n = 1.0 / n as f64;

    let (s, e) = (spec.start_index as usize, spec.end_index as usize);
    let c = kernel.center();
    let w = kernel.weights();
    let vocab = logits.vocab();

    let mut grad = want_grad.then(|| logits.zeros_like());
    let mut p = vec![0.0; vocab];
    let mut conv = vec![0.0; spec.bins];
    let mut total = 0.0;
    let mut floored_positions = 0;
    let mut mass_before = 0.0;
    let mut mass_after = 0.0;

    for b in 0..logits.batch() {
        for l in 0..logits.seq() {
            if !targets.masked(b, l) {
                continue;
            }
            softmax_row(logits.row(b, l), &mut p);
            mass_before += p[s..=e].iter().sum::<f64>();
            for (rel, slot) in conv.iter_mut().enumerate() {
                let k = s + rel;
                let mut acc = 0.0;
                for (i, &wi) in w.iter().enumerate() {
                    let idx = k + i;
                    if idx >= c + s && idx <= c + e {
                        acc += wi * p[idx - c];
                    }
                }
                *slot = acc;
            }
            mass_after += conv.iter().sum::<f64>();

            let t = targets.label(b, l) as usize;
            if (s..=e).contains(&t) {
                let ct = conv[t - s];
                let floored = ct <= epsilon;
                total += -ct.max(epsilon).ln();
                if floored {
                    floored_positions += 1;
                } else if let Some(g) = grad.as_mut() {
                    // d loss/dz_v = scale * P_v * (1 - kappa(v)/C_t) where
                    // kappa(v) is the kernel weight at offset v-t, zero
                    // outside the window clipped to [s, e].
                    let row = g.row_mut(b, l);
                    for (gv, &pv) in row.iter_mut().zip(&p) {
                        *gv = pv * inv_n;
                    }
                    let lo = s.max(t.saturating_sub(c));
                    let hi = e.min(t + c);
                    for u in lo..=hi {
                        row[u] -= p[u] * w[c + u - t] / ct * inv_n;
                    }
                }
            } else {
                let (loss, floored) =
                    ce_position(&p, t, epsilon, inv_n, grad.as_mut().map(|g| g.row_mut(b, l)));
                total += loss;
                if floored {
                    floored_positions += 1;
                }
            }
        }
    }

    Ok(LossOutput {
        loss: total * inv_n,
        grad,
        diagnostics: LossDiagnostics {
            masked_positions: n,
            floored_positions,
            mean_range_mass_before: Some(mass_before * inv_n),
            mean_range_mass_after: Some(mass_after * inv_n),
        },
    })
}

/// Masked mean NLL of the spliced distribution (forward only).
pub fn gk_cel(
    logits: &LogitsBatch,
    targets: &TargetBatch,
    spec: &CoordSpec,
    kernel: &GaussianKernel,
    epsilon: f64,
) -> Result<LossOutput, LossError> {
    gk_impl(logits, targets, spec, kernel, epsilon, false)
}

/// Same loss with the hand-derived gradient filled in.
pub fn gk_cel_grad(
    logits: &LogitsBatch,
    targets: &TargetBatch,
    spec: &CoordSpec,
    kernel: &GaussianKernel,
    epsilon: f64,
) -> Result<LossOutput, LossError> {
    gk_impl(logits, targets, spec, kernel, epsilon, true)
}

fn ce_impl(
    logits: &LogitsBatch,
    targets: &TargetBatch,
    epsilon: f64,
    want_grad: bool,
) -> Result<LossOutput, LossError> {
    check_shapes(logits, targets)?;
    logits.ensure_finite()?;
    let n = check_targets(logits, targets)?;
    let inv_n = 1.0 / n as f64;

    let mut grad = want_grad.then(|| logits.zeros_like());
    let mut p = vec![0.0; logits.vocab()];
    let mut total = 0.0;
    let mut floored_positions = 0;

    for b in 0..logits.batch() {
        for l in 0..logits.seq() {
            if !targets.masked(b, l) {
                continue;
            }
            softmax_row(logits.row(b, l), &mut p);
            let t = targets.label(b, l) as usize;
            let (loss, floored) =
                ce_position(&p, t, epsilon, inv_n, grad.as_mut().map(|g| g.row_mut(b, l)));
            total += loss;
            if floored {
                floored_positions += 1;
            }
        }
    }

    Ok(LossOutput {
        loss: total * inv_n,
        grad,
        diagnostics: LossDiagnostics {
            masked_positions: n,
            floored_positions,
            mean_range_mass_before: None,
            mean_range_mass_after: None,
        },
    })
}

/// Masked mean NLL over the raw softmax, with [`DEFAULT_EPSILON`].
pub fn cross_entropy(logits: &LogitsBatch, targets: &TargetBatch) -> Result<LossOutput, LossError> {
    ce_impl(logits, targets, DEFAULT_EPSILON, false)
}

/// [`cross_entropy`] with an explicit floor, for exact comparisons
/// against the smoothed loss.
pub fn cross_entropy_with_epsilon(
    logits: &LogitsBatch,
    targets: &TargetBatch,
    epsilon: f64,
) -> Result<LossOutput, LossError> {
    ce_impl(logits, targets, epsilon, false)
}

/// Cross-entropy with its gradient.
pub fn cross_entropy_grad(
    logits: &LogitsBatch,
    targets: &TargetBatch,
) -> Result<LossOutput, LossError> {
    ce_impl(logits, targets, DEFAULT_EPSILON, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::build_kernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec246() -> CoordSpec {
        CoordSpec::new(3, 2, 4).unwrap()
    }

    fn random_logits(rng: &mut ChaCha8Rng, b: usize, l: usize, v: usize) -> LogitsBatch {
        let values = (0..b * l * v).map(|_| rng.gen_range(-4.0..4.0)).collect();
        LogitsBatch::new(b, l, v, values).unwrap()
    }

    #[test]
    fn worked_example_is_ln_6() {
        // Zero logits over 6 tokens, range [2,4], target 3: the normalized
        // kernel sums to 1 so the convolution returns exactly 1/6 at the
        // target and the loss is ln 6.
        let logits = LogitsBatch::zeros(1, 1, 6);
        let targets = TargetBatch::dense(1, 1, vec![3]).unwrap();
        let kernel = build_kernel(3, 1.0, true).unwrap();
        let out = gk_cel(&logits, &targets, &spec246(), &kernel, DEFAULT_EPSILON).unwrap();
        assert!((out.loss - 6.0f64.ln()).abs() < 1e-12, "loss {}", out.loss);
        assert!((out.loss - 1.7917).abs() < 1e-3);
    }

    #[test]
    fn worked_example_matches_straight_line_pipeline() {
        // Independent recomputation through the public intermediate ops.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let logits = random_logits(&mut rng, 2, 3, 9);
        let spec = CoordSpec::new(4, 3, 6).unwrap();
        let labels = vec![4, 0, 5, 6, 3, 8];
        let targets = TargetBatch::dense(2, 3, labels.clone()).unwrap();
        let kernel = build_kernel(3, 0.8, true).unwrap();

        let (p, pprime) = masked_range_probs(&logits, &spec).unwrap();
        let c = convolve_range(&pprime, &kernel, &spec).unwrap();
        let pdd = splice(&p, &c, &spec).unwrap();
        let mut manual = 0.0;
        for b in 0..2 {
            for l in 0..3 {
                let t = labels[b * 3 + l] as usize;
                manual += -pdd.get(b, l, t).max(DEFAULT_EPSILON).ln();
            }
        }
        manual /= 6.0;

        let fused = gk_cel(&logits, &targets, &spec, &kernel, DEFAULT_EPSILON).unwrap();
        assert!((fused.loss - manual).abs() < 1e-12, "{} vs {manual}", fused.loss);
    }

    #[test]
    fn uniform_probs_masked_outside_range() {
        let logits = LogitsBatch::zeros(1, 1, 10);
        let spec = CoordSpec::new(3, 3, 5).unwrap();
        let (p, pprime) = masked_range_probs(&logits, &spec).unwrap();
        for v in 0..10 {
            assert!((p.get(0, 0, v) - 0.1).abs() < 1e-15);
            let expect = if (3..=5).contains(&v) { 0.1 } else { 0.0 };
            assert_eq!(pprime.get(0, 0, v), expect);
        }
    }

    #[test]
    fn range_mass_never_exceeds_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let logits = random_logits(&mut rng, 1, 2, 12);
            let spec = CoordSpec::new(5, 4, 8).unwrap();
            let (_, pprime) = masked_range_probs(&logits, &spec).unwrap();
            for l in 0..2 {
                let mass: f64 = pprime.row(0, l).iter().sum();
                assert!(mass <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn convolve_point_mass_spreads_kernel() {
        // Point mass at the range center picks up the kernel weights.
        let spec = CoordSpec::new(5, 2, 6).unwrap();
        let mut pprime = LogitsBatch::zeros(1, 1, 9);
        pprime.set(0, 0, 4, 1.0);
        let kernel = build_kernel(3, 1.0, true).unwrap();
        let c = convolve_range(&pprime, &kernel, &spec).unwrap();
        assert!((c.get(0, 0, 4) - 0.4519).abs() < 5e-5);
        assert!((c.get(0, 0, 3) - 0.2741).abs() < 5e-5);
        assert!((c.get(0, 0, 5) - 0.2741).abs() < 5e-5);
        assert_eq!(c.get(0, 0, 1), 0.0);
        assert_eq!(c.get(0, 0, 7), 0.0);
    }

    #[test]
    fn convolve_edge_mass_leaks_to_padding() {
        let spec = CoordSpec::new(5, 2, 6).unwrap();
        let mut pprime = LogitsBatch::zeros(1, 1, 9);
        pprime.set(0, 0, 2, 1.0);
        let kernel = build_kernel(3, 1.0, true).unwrap();
        let c = convolve_range(&pprime, &kernel, &spec).unwrap();
        let total: f64 = c.row(0, 0).iter().sum();
        // One side lobe fell off the range edge.
        assert!(total < 1.0 - 1e-6, "total {total}");
        assert!((total - (1.0 - 0.2741)).abs() < 5e-5);
    }

    #[test]
    fn convolve_rejects_wide_kernel() {
        let spec = CoordSpec::new(3, 2, 4).unwrap();
        let pprime = LogitsBatch::zeros(1, 1, 9);
        let kernel = build_kernel(5, 1.0, true).unwrap();
        assert_eq!(
            convolve_range(&pprime, &kernel, &spec),
            Err(LossError::KernelWiderThanRange { n: 5, bins: 3 })
        );
    }

    #[test]
    fn splice_keeps_off_range_entries_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = random_logits(&mut rng, 1, 2, 10);
        let spec = CoordSpec::new(4, 5, 8).unwrap();
        let (p, pprime) = masked_range_probs(&logits, &spec).unwrap();
        let kernel = build_kernel(3, 1.0, true).unwrap();
        let c = convolve_range(&pprime, &kernel, &spec).unwrap();
        let pdd = splice(&p, &c, &spec).unwrap();
        for l in 0..2 {
            for v in 0..10 {
                if (5..=8).contains(&v) {
                    assert_eq!(pdd.get(0, l, v), c.get(0, l, v));
                } else {
                    assert_eq!(pdd.get(0, l, v), p.get(0, l, v));
                }
            }
        }
    }

    #[test]
    fn uniform_cross_entropy_is_log_vocab() {
        let logits = LogitsBatch::zeros(1, 1, 6);
        let targets = TargetBatch::dense(1, 1, vec![2]).unwrap();
        let out = cross_entropy(&logits, &targets).unwrap();
        assert!((out.loss - 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_cross_entropy_is_near_zero() {
        let mut logits = LogitsBatch::zeros(1, 1, 6);
        logits.set(0, 0, 2, 50.0);
        let targets = TargetBatch::dense(1, 1, vec![2]).unwrap();
        let out = cross_entropy(&logits, &targets).unwrap();
        assert!(out.loss < 1e-12, "loss {}", out.loss);
    }

    #[test]
    fn off_range_targets_match_cross_entropy_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = CoordSpec::new(4, 6, 9).unwrap();
        let kernel = build_kernel(3, 1.0, true).unwrap();
        for _ in 0..20 {
            let logits = random_logits(&mut rng, 2, 4, 12);
            // Every masked target off-range.
            let labels: Vec<u32> = (0..8).map(|_| rng.gen_range(0..6)).collect();
            let targets = TargetBatch::dense(2, 4, labels).unwrap();
            let gk = gk_cel_grad(&logits, &targets, &spec, &kernel, DEFAULT_EPSILON).unwrap();
            let ce = cross_entropy_grad(&logits, &targets).unwrap();
            assert_eq!(gk.loss, ce.loss, "loss must agree bitwise");
            assert_eq!(gk.grad.unwrap().values, ce.grad.unwrap().values);
        }
    }

    #[test]
    fn mixed_batch_off_range_rows_still_bitwise_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = CoordSpec::new(4, 6, 9).unwrap();
        let kernel = build_kernel(3, 1.0, true).unwrap();
        let logits = random_logits(&mut rng, 1, 6, 12);
        let labels = vec![1, 7, 3, 8, 5, 0];
        let targets = TargetBatch::dense(1, 6, labels.clone()).unwrap();
        let gk = gk_cel_grad(&logits, &targets, &spec, &kernel, DEFAULT_EPSILON).unwrap();
        let ce = cross_entropy_grad(&logits, &targets).unwrap();
        let gk_grad = gk.grad.unwrap();
        let ce_grad = ce.grad.unwrap();
        for (l, &label) in labels.iter().enumerate() {
            if !(6..=9).contains(&label) {
                assert_eq!(gk_grad.row(0, l), ce_grad.row(0, l), "position {l}");
            }
        }
    }

    #[test]
    fn delta_kernel_limit_recovers_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = CoordSpec::new(5, 3, 7).unwrap();
        let kernel = build_kernel(3, 1e-6, true).unwrap();
        for _ in 0..50 {
            let logits = random_logits(&mut rng, 1, 3, 10);
            let labels: Vec<u32> = (0..3).map(|_| rng.gen_range(3..8)).collect();
            let targets = TargetBatch::dense(1, 3, labels).unwrap();
            let gk = gk_cel(&logits, &targets, &spec, &kernel, DEFAULT_EPSILON).unwrap();
            let ce = cross_entropy(&logits, &targets).unwrap();
            assert!((gk.loss - ce.loss).abs() < 1e-6, "{} vs {}", gk.loss, ce.loss);
        }
    }

    #[test]
    fn grad_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let spec = CoordSpec::new(5, 3, 7).unwrap();
        let kernel = build_kernel(5, 1.3, true).unwrap();
        let logits = random_logits(&mut rng, 2, 3, 10);
        let labels: Vec<u32> = (0..6).map(|_| rng.gen_range(0..10)).collect();
        let targets = TargetBatch::dense(2, 3, labels).unwrap();
        let out = gk_cel_grad(&logits, &targets, &spec, &kernel, DEFAULT_EPSILON).unwrap();
        let grad = out.grad.unwrap();
        for b in 0..2 {
            for l in 0..3 {
                let sum: f64 = grad.row(b, l).iter().sum();
                assert!(sum.abs() < 1e-12, "row sum {sum}");
            }
        }
    }

    #[test]
    fn normalized_kernel_keeps_loss_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let spec = CoordSpec::new(6, 2, 7).unwrap();
        for _ in 0..100 {
            let logits = random_logits(&mut rng, 1, 2, 10);
            let labels: Vec<u32> = (0..2).map(|_| rng.gen_range(0..10)).collect();
            let targets = TargetBatch::dense(1, 2, labels).unwrap();
            let kernel = build_kernel(5, rng.gen_range(0.3..2.0), true).unwrap();
            let out = gk_cel(&logits, &targets, &spec, &kernel, DEFAULT_EPSILON).unwrap();
            assert!(out.loss >= 0.0);
        }
    }

    #[test]
    fn diagnostics_report_padding_loss() {
        // All mass near the range edge: convolution mass must drop.
        let mut logits = LogitsBatch::zeros(1, 1, 8);
        logits.set(0, 0, 2, 30.0);
        let spec = CoordSpec::new(4, 2, 5).unwrap();
        let kernel = build_kernel(3, 1.0, true).unwrap();
        let targets = TargetBatch::dense(1, 1, vec![2]).unwrap();
        let out = gk_cel(&logits, &targets, &spec, &kernel, DEFAULT_EPSILON).unwrap();
        let before = out.diagnostics.mean_range_mass_before.unwrap();
        let after = out.diagnostics.mean_range_mass_after.unwrap();
        assert!(before > 0.999);
        assert!(after < before - 0.2, "before {before}, after {after}");
    }

    #[test]
    fn empty_mask_is_an_error() {
        let logits = LogitsBatch::zeros(1, 2, 6);
        let targets = TargetBatch::new(1, 2, vec![0, 0], vec![false, false]).unwrap();
        assert_eq!(cross_entropy(&logits, &targets), Err(LossError::EmptyBatch));
    }

    #[test]
    fn non_finite_logits_are_an_error() {
        let mut logits = LogitsBatch::zeros(1, 1, 6);
        logits.set(0, 0, 3, f64::NAN);
        let targets = TargetBatch::dense(1, 1, vec![2]).unwrap();
        assert_eq!(
            cross_entropy(&logits, &targets),
            Err(LossError::NonFiniteLogit { b: 0, l: 0, v: 3 })
        );
    }

    #[test]
    fn smoothed_loss_forgives_one_bin_misses() {
        // Concentrated mode at bin center, target one bin off: smoothing
        // must make the loss strictly smaller than plain cross-entropy.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let spec = CoordSpec::new(9, 3, 11).unwrap();
        let kernel = build_kernel(5, 1.0, true).unwrap();
        let mut wins = 0;
        let trials = 500;
        for _ in 0..trials {
            let mut logits = random_logits(&mut rng, 1, 1, 14);
            let mode = rng.gen_range(4..11);
            logits.set(0, 0, mode, logits.get(0, 0, mode) + 8.0);
            let target = if rng.gen_bool(0.5) { mode - 1 } else { mode + 1 };
            let targets = TargetBatch::dense(1, 1, vec![target as u32]).unwrap();
            let gk = gk_cel(&logits, &targets, &spec, &kernel, DEFAULT_EPSILON).unwrap();
            let ce = cross_entropy(&logits, &targets).unwrap();
            if gk.loss < ce.loss {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.99 * trials as f64, "wins {wins}/{trials}");
    }
}
