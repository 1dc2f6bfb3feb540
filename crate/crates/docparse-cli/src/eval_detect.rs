//! `docparse eval-detect`: detection precision/recall/F1 over a JSON
//! Lines corpus, micro-averaged across images. Confidence-free
//! predictions get a plain score at the configured IoU threshold;
//! `--sweep` instead scores every confidence threshold and keeps the
//! best F1, which demands a confidence on every prediction.

use std::path::PathBuf;

use anyhow::Context;
use docparse::coord::{BBox, LayoutElement};
use docparse::metrics::{match_detections, prf1, MetricsReport, Prf1, ScoredDetection, ThresholdProvenance};

#[derive(clap::Args)]
pub struct Args {
    /// JSON Lines input, one {"id", "preds": [...], "gts": [...]} per line
    #[arg(long)]
    input: PathBuf,
    /// Match threshold; defaults to 0.5 when omitted
    #[arg(long)]
    iou_threshold: Option<f64>,
    /// Sweep confidence thresholds and report the best F1
    #[arg(long)]
    sweep: bool,
    /// Report path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(serde::Deserialize)]
struct ImageIn {
    id: serde_json::Value,
    preds: Vec<PredIn>,
    gts: Vec<BoxIn>,
}

#[derive(serde::Deserialize)]
struct PredIn {
    label: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    #[serde(default)]
    conf: Option<f64>,
}

#[derive(serde::Deserialize)]
struct BoxIn {
    label: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

struct Image {
    preds: Vec<ScoredDetection>,
    gts: Vec<LayoutElement>,
}

#[derive(serde::Serialize)]
struct Report<'a> {
    config: Config<'a>,
    images: usize,
    metrics: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_curve: Option<Vec<CurvePoint>>,
}

#[derive(serde::Serialize)]
struct Config<'a> {
    input: &'a str,
    iou_threshold: f64,
    sweep: bool,
}

#[derive(Clone, Copy, serde::Serialize)]
struct CurvePoint {
    confidence_threshold: f64,
    kept_predictions: usize,
    scores: Prf1,
}

pub fn run(args: Args) -> anyhow::Result<u8> {
    let iou_threshold = args.iou_threshold.unwrap_or(0.5);
    anyhow::ensure!(
        (0.0..=1.0).contains(&iou_threshold),
        "--iou-threshold must lie in [0, 1]"
    );
    let records: Vec<ImageIn> = crate::jsonl::read_records(&args.input)?;
    let mut images = Vec::with_capacity(records.len());
    for (index, record) in records.into_iter().enumerate() {
        images.push(convert(record).with_context(|| {
            format!("{}: record {}", args.input.display(), index + 1)
        })?);
    }

    let mut metrics = MetricsReport::default();
    let mut sweep_curve = None;
    if args.sweep {
        let (best, curve) = sweep(&images, iou_threshold)?;
        metrics.precision = Some(best.scores.precision);
        metrics.recall = Some(best.scores.recall);
        metrics.f1 = Some(best.scores.f1);
        metrics.threshold = Some(ThresholdProvenance {
            iou_threshold,
            source: "sweep".to_string(),
            confidence_threshold: Some(best.confidence_threshold),
        });
        sweep_curve = Some(curve);
    } else {
        let scores = score_plain(&images, iou_threshold);
        metrics.precision = Some(scores.precision);
        metrics.recall = Some(scores.recall);
        metrics.f1 = Some(scores.f1);
        metrics.threshold = Some(ThresholdProvenance {
            iou_threshold,
            source: if args.iou_threshold.is_some() { "flag" } else { "default" }.to_string(),
            confidence_threshold: None,
        });
    }

    let input_name = args.input.display().to_string();
    let report = Report {
        config: Config { input: &input_name, iou_threshold, sweep: args.sweep },
        images: images.len(),
        metrics,
        sweep_curve,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    crate::jsonl::write_out(args.out.as_deref(), &json)?;
    eprintln!(
        "eval-detect: {} images, precision {:.4}, recall {:.4}, f1 {:.4}",
        report.images,
        report.metrics.precision.unwrap_or(0.0),
        report.metrics.recall.unwrap_or(0.0),
        report.metrics.f1.unwrap_or(0.0)
    );
    Ok(0)
}

fn convert(record: ImageIn) -> anyhow::Result<Image> {
    let id = record.id;
    let make_box = |b: [f64; 4]| {
        BBox::new(b[0], b[1], b[2], b[3]).with_context(|| format!("image {id}"))
    };
    let mut preds = Vec::with_capacity(record.preds.len());
    for p in record.preds {
        let element = LayoutElement::new(p.label, make_box(p.bbox)?);
        preds.push(ScoredDetection::new(element, p.conf).with_context(|| format!("image {id}"))?);
    }
    let mut gts = Vec::with_capacity(record.gts.len());
    for g in record.gts {
        gts.push(LayoutElement::new(g.label, make_box(g.bbox)?));
    }
    Ok(Image { preds, gts })
}

/// Micro-averaged score with every prediction kept.
fn score_plain(images: &[Image], iou_threshold: f64) -> Prf1 {
    let mut matched = 0;
    let mut predictions = 0;
    let mut ground_truths = 0;
    for image in images {
        let result = match_detections(&image.preds, &image.gts, iou_threshold);
        matched += result.pairs.len();
        predictions += image.preds.len();
        ground_truths += image.gts.len();
    }
    prf1(matched, predictions, ground_truths)
}

/// Scores every observed confidence value as a threshold, keeping
/// predictions with confidence >= threshold, and returns the best point
/// (ties keep the earliest threshold) plus the full curve.
fn sweep(images: &[Image], iou_threshold: f64) -> anyhow::Result<(CurvePoint, Vec<CurvePoint>)> {
    let mut thresholds = Vec::new();
    for image in images {
        for pred in &image.preds {
            let conf = pred
                .confidence
                .ok_or_else(|| anyhow::anyhow!("--sweep requires a confidence on every prediction"))?;
            thresholds.push(conf);
        }
    }
    anyhow::ensure!(!thresholds.is_empty(), "--sweep requires at least one prediction");
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut curve = Vec::with_capacity(thresholds.len());
    for threshold in thresholds {
        let mut matched = 0;
        let mut predictions = 0;
        let mut ground_truths = 0;
        for image in images {
            let kept: Vec<ScoredDetection> = image
                .preds
                .iter()
                .filter(|p| p.confidence.expect("checked above") >= threshold)
                .cloned()
                .collect();
            let result = match_detections(&kept, &image.gts, iou_threshold);
            matched += result.pairs.len();
            predictions += kept.len();
            ground_truths += image.gts.len();
        }
        curve.push(CurvePoint {
            confidence_threshold: threshold,
            kept_predictions: predictions,
            scores: prf1(matched, predictions, ground_truths),
        });
    }
    let best = curve
        .iter()
        .copied()
        .reduce(|best, point| if point.scores.f1 > best.scores.f1 { point } else { best })
        .expect("nonempty curve");
    Ok((best, curve))
}
