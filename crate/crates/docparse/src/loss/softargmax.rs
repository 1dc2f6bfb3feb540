//! Soft-argmax coordinate regression.
//!
//! Instead of a categorical loss over bins, take the expectation of the bin
//! index under a tempered softmax restricted to the coordinate range and
//! regress it onto the target bin with MSE. Fully differentiable, but the
//! expectation couples every bin's logit to the error signal.

use crate::coord::CoordSpec;

use super::{LogitsBatch, LossDiagnostics, LossError, LossOutput, TargetBatch};

fn check(
    logits: &LogitsBatch,
    targets: &TargetBatch,
    spec: &CoordSpec,
    temperature: f64,
) -> Result<usize, LossError> {
    if logits.batch() != targets.batch() || logits.seq() != targets.seq() {
        return Err(LossError::ShapeMismatch(format!(
            "logits {}x{} vs targets {}x{}",
            logits.batch(),
            logits.seq(),
            targets.batch(),
            targets.seq()
        )));
    }
    logits.ensure_finite()?;
    if spec.end_index as usize >= logits.vocab() {
        return Err(LossError::SpecOutOfVocab { end: spec.end_index, vocab: logits.vocab() });
    }
    if spec.bins < 2 {
        return Err(LossError::RangeTooNarrow(spec.bins));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(LossError::BadTemperature(temperature));
    }
    let mut n = 0;
    for b in 0..targets.batch() {
        for l in 0..targets.seq() {
            if !targets.masked(b, l) {
                continue;
            }
            n += 1;
            let label = targets.label(b, l);
            if !spec.contains(label) {
                return Err(LossError::OffRangeTarget { b, l, label });
            }
        }
    }
    if n == 0 {
        return Err(LossError::EmptyBatch);
    }
    Ok(n)
}

fn impl_(
    logits: &LogitsBatch,
    targets: &TargetBatch,
    spec: &CoordSpec,
    temperature: f64,
    weight: f64,
    want_grad: bool,
) -> Result<LossOutput, LossError> {
    let n = check(logits, targets, spec, temperature)?;
    let inv_n = 1.0 / n as f64;
    let (s, e) = (spec.start_index as usize, spec.end_index as usize);
    let denom = (spec.bins - 1) as f64;

    let mut grad = want_grad.then(|| logits.zeros_like());
    let mut q = vec![0.0; spec.bins];
    let mut total = 0.0;

    for b in 0..logits.batch() {
        for l in 0..logits.seq() {
            if !targets.masked(b, l) {
                continue;
            }
            let row = logits.row(b, l);
            // Tempered softmax over the range slice only.
            let max = row[s..=e].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (slot, &z) in q.iter_mut().zip(&row[s..=e]) {
                *slot = ((z - max) / temperature).exp();
                sum += *slot;
            }
            for slot in q.iter_mut() {
                *slot /= sum;
            }
            let expected: f64 = q.iter().enumerate().map(|(k, &qk)| k as f64 * qk).sum();
            let target_bin = (targets.label(b, l) - spec.start_index as u32) as f64;
            let d = (expected - target_bin) / denom;
            total += d * d;
            if let Some(g) = grad.as_mut() {
                // dE/dz_v = q_v (v - E) / temperature on the range slice.
                let coeff = weight * inv_n * 2.0 * d / denom / temperature;
                let row = g.row_mut(b, l);
                for (k, &qk) in q.iter().enumerate() {
                    row[s + k] = coeff * qk * (k as f64 - expected);
                }
            }
        }
    }

    Ok(LossOutput {
        loss: weight * total * inv_n,
        grad,
        diagnostics: LossDiagnostics {
            masked_positions: n,
            floored_positions: 0,
            mean_range_mass_before: None,
            mean_range_mass_after: None,
        },
    })
}

/// Weighted MSE between the soft-argmax bin and the target bin, both
/// rescaled to `[0,1]`; masked targets must be coordinate tokens.
pub fn softargmax_loss(
    logits: &LogitsBatch,
    targets: &TargetBatch,
    spec: &CoordSpec,
    temperature: f64,
    weight: f64,
) -> Result<LossOutput, LossError> {
    impl_(logits, targets, spec, temperature, weight, false)
}

/// Same loss with its analytic gradient.
pub fn softargmax_loss_grad(
    logits: &LogitsBatch,
    targets: &TargetBatch,
    spec: &CoordSpec,
    temperature: f64,
    weight: f64,
) -> Result<LossOutput, LossError> {
    impl_(logits, targets, spec, temperature, weight, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> CoordSpec {
        CoordSpec::new(5, 2, 6).unwrap()
    }

    #[test]
    fn point_mass_at_target_is_zero_loss() {
        let mut logits = LogitsBatch::zeros(1, 1, 8);
        logits.set(0, 0, 4, 60.0);
        let targets = TargetBatch::dense(1, 1, vec![4]).unwrap();
        let out = softargmax_loss(&logits, &targets, &spec(), 1.0, 1.0).unwrap();
        assert!(out.loss < 1e-12, "loss {}", out.loss);
    }

    #[test]
    fn uniform_with_center_target_is_zero_loss() {
        let logits = LogitsBatch::zeros(1, 1, 8);
        let targets = TargetBatch::dense(1, 1, vec![4]).unwrap();
        let out = softargmax_loss(&logits, &targets, &spec(), 1.0, 1.0).unwrap();
        assert!(out.loss < 1e-24, "loss {}", out.loss);
    }

    #[test]
    fn weight_scales_linearly() {
        let mut logits = LogitsBatch::zeros(1, 1, 8);
        logits.set(0, 0, 2, 3.0);
        let targets = TargetBatch::dense(1, 1, vec![6]).unwrap();
        let one = softargmax_loss(&logits, &targets, &spec(), 1.0, 1.0).unwrap();
        let three = softargmax_loss(&logits, &targets, &spec(), 1.0, 3.0).unwrap();
        assert!((three.loss - 3.0 * one.loss).abs() < 1e-12);
        assert!(one.loss > 0.0);
    }

    #[test]
    fn off_range_target_is_an_error() {
        let logits = LogitsBatch::zeros(1, 1, 8);
        let targets = TargetBatch::dense(1, 1, vec![1]).unwrap();
        assert_eq!(
            softargmax_loss(&logits, &targets, &spec(), 1.0, 1.0),
            Err(LossError::OffRangeTarget { b: 0, l: 0, label: 1 })
        );
    }

    #[test]
    fn bad_temperature_is_an_error() {
        let logits = LogitsBatch::zeros(1, 1, 8);
        let targets = TargetBatch::dense(1, 1, vec![4]).unwrap();
        assert_eq!(
            softargmax_loss(&logits, &targets, &spec(), 0.0, 1.0),
            Err(LossError::BadTemperature(0.0))
        );
    }

    #[test]
    fn gradient_zero_outside_range() {
        let mut logits = LogitsBatch::zeros(1, 1, 8);
        logits.set(0, 0, 3, 1.5);
        let targets = TargetBatch::dense(1, 1, vec![5]).unwrap();
        let out = softargmax_loss_grad(&logits, &targets, &spec(), 0.7, 2.0).unwrap();
        let grad = out.grad.unwrap();
        assert_eq!(grad.get(0, 0, 0), 0.0);
        assert_eq!(grad.get(0, 0, 1), 0.0);
        assert_eq!(grad.get(0, 0, 7), 0.0);
        let inside: f64 = grad.row(0, 0)[2..=6].iter().map(|g| g.abs()).sum();
        assert!(inside > 0.0);
    }
}
