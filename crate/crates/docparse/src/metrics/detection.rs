//! IoU matching and detection-level precision/recall/F1.

use serde::Serialize;

use super::MetricsError;
use crate::coord::{BBox, LayoutElement};

/// A prediction with an optional confidence. Generative decoders emit
/// none; confidence-based baselines carry one in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDetection {
    pub element: LayoutElement,
    pub confidence: Option<f64>,
}

impl ScoredDetection {
    pub fn new(element: LayoutElement, confidence: Option<f64>) -> Result<Self, MetricsError> {
        if let Some(c) = confidence {
            if !(0.0..=1.0).contains(&c) || c.is_nan() {
                return Err(MetricsError::BadConfidence(c));
            }
        }
        Ok(Self { element, confidence })
    }

    pub fn unscored(element: LayoutElement) -> Self {
        Self { element, confidence: None }
    }
}

/// Intersection over union; disjoint boxes give 0, identical
/// positive-area boxes give 1, degenerate unions give 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let iy = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

/// Greedy one-to-one matching over label-equal pairs in descending IoU
/// order; ties break by (pred index, gt index) ascending so the result is
/// independent of input permutation quirks.
pub fn match_detections(
    preds: &[ScoredDetection],
    gts: &[LayoutElement],
    iou_threshold: f64,
) -> MatchResult {
    let mut candidates: Vec<MatchedPair> = Vec::new();
    for (p, pred) in preds.iter().enumerate() {
        for (g, gt) in gts.iter().enumerate() {
            if pred.element.label != gt.label {
                continue;
            }
            let overlap = iou(&pred.element.bbox, &gt.bbox);
            if overlap >= iou_threshold {
                candidates.push(MatchedPair { pred: p, gt: g, iou: overlap });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.iou.total_cmp(&a.iou).then(a.pred.cmp(&b.pred)).then(a.gt.cmp(&b.gt))
    });
    let mut pred_taken = vec![false; preds.len()];
    let mut gt_taken = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for cand in candidates {
        if !pred_taken[cand.pred] && !gt_taken[cand.gt] {
            pred_taken[cand.pred] = true;
            gt_taken[cand.gt] = true;
            pairs.push(cand);
        }
    }
    MatchResult {
        pairs,
        unmatched_preds: (0..preds.len()).filter(|&i| !pred_taken[i]).collect(),
        unmatched_gts: (0..gts.len()).filter(|&i| !gt_taken[i]).collect(),
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub predictions: usize,
    pub ground_truths: usize,
}

/// Precision/recall/F1 from match counts. Empty denominators score 0.
pub fn prf1(matched: usize, predictions: usize, ground_truths: usize) -> Prf1 {
    let precision = if predictions == 0 { 0.0 } else { matched as f64 / predictions as f64 };
    let recall = if ground_truths == 0 { 0.0 } else { matched as f64 / ground_truths as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf1 { precision, recall, f1, matched, predictions, ground_truths }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub confidence_threshold: f64,
    pub kept_predictions: usize,
    pub scores: Prf1,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub best: SweepPoint,
    pub curve: Vec<SweepPoint>,
}

/// Scores every confidence threshold and keeps the best F1, giving
/// confidence-based baselines their best case. Ties keep the earliest
/// threshold in the given order.
pub fn max_f1_sweep(
    preds: &[ScoredDetection],
    gts: &[LayoutElement],
    confidence_thresholds: &[f64],
    iou_threshold: f64,
) -> Result<SweepResult, MetricsError> {
    if confidence_thresholds.is_empty() {
        return Err(MetricsError::EmptyThresholds);
    }
    for pred in preds {
        match pred.confidence {
            None => return Err(MetricsError::ConfidencesAbsent),
            Some(c) if !(0.0..=1.0).contains(&c) || c.is_nan() => {
                return Err(MetricsError::BadConfidence(c));
            }
            Some(_) => {}
        }
    }
    let mut curve = Vec::with_capacity(confidence_thresholds.len());
    for &threshold in confidence_thresholds {
        let kept: Vec<ScoredDetection> = preds
            .iter()
            .filter(|p| p.confidence.expect("checked above") >= threshold)
            .cloned()
            .collect();
        let result = match_detections(&kept, gts, iou_threshold);
        let scores = prf1(result.pairs.len(), kept.len(), gts.len());
        curve.push(SweepPoint { confidence_threshold: threshold, kept_predictions: kept.len(), scores });
    }
    let best = curve
        .iter()
        .max_by(|a, b| a.scores.f1.total_cmp(&b.scores.f1))
        .expect("nonempty curve")
        .clone();
    // max_by returns the last maximum; walk back to the earliest.
    let best = curve
        .iter()
        .find(|p| p.scores.f1 == best.scores.f1)
        .expect("best came from curve")
        .clone();
    Ok(SweepResult { best, curve })
}
