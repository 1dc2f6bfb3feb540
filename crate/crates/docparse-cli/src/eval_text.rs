//! `docparse eval-text`: sequence metrics over prediction/reference
//! pairs, or table-cell F1 when asked. With `--normalize-first` both
//! sides are canonicalized before any metric; a side whose
//! normalization fails is compared raw, matching [`exp_rate`].

use std::path::PathBuf;

use docparse::latex::{normalize, RuleSet};
use docparse::metrics::{
    bleu, edit_distance_chars, exp_rate, normalized_edit_distance, prf1, table_cell_f1,
    MetricsReport,
};

#[derive(clap::Args)]
pub struct Args {
    /// JSON Lines input, one {"id", "pred", "ref"} per line
    #[arg(long)]
    input: PathBuf,
    /// Canonicalize both sides before scoring
    #[arg(long)]
    normalize_first: bool,
    /// Score table-cell F1 instead of sequence metrics
    #[arg(long)]
    table_cells: bool,
    #[arg(long, default_value_t = 4)]
    bleu_max_n: usize,
    /// Report path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(serde::Deserialize)]
struct Pair {
    #[allow(dead_code)]
    id: serde_json::Value,
    pred: String,
    #[serde(rename = "ref")]
    reference: String,
}

#[derive(serde::Serialize)]
struct Report<'a> {
    config: Config<'a>,
    pairs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    bleu_floored_pairs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extraction_errors: Option<usize>,
    metrics: MetricsReport,
}

#[derive(serde::Serialize)]
struct Config<'a> {
    input: &'a str,
    normalize_first: bool,
    mode: &'a str,
    bleu_max_n: usize,
}

pub fn run(args: Args) -> anyhow::Result<u8> {
    anyhow::ensure!(args.bleu_max_n >= 1, "--bleu-max-n must be at least 1");
    let records: Vec<Pair> = crate::jsonl::read_records(&args.input)?;
    let rules = RuleSet::all();
    let canon = |s: &str| {
        if args.normalize_first {
            normalize(s, &rules).unwrap_or_else(|_| s.to_string())
        } else {
            s.to_string()
        }
    };
    let pairs: Vec<(String, String)> = records
        .iter()
        .map(|p| (canon(&p.pred), canon(&p.reference)))
        .collect();

    let mut metrics = MetricsReport::default();
    let mut bleu_floored_pairs = None;
    let mut extraction_errors = None;
    if args.table_cells {
        let mut matched = 0usize;
        let mut pred_cells = 0usize;
        let mut gt_cells = 0usize;
        let mut failures = 0usize;
        for (pred, reference) in &pairs {
            let score = table_cell_f1(pred, reference);
            matched += score.matched;
            pred_cells += score.pred_cells;
            gt_cells += score.gt_cells;
            failures += usize::from(score.pred_error) + usize::from(score.gt_error);
        }
        let scores = prf1(matched, pred_cells, gt_cells);
        metrics.precision = Some(scores.precision);
        metrics.recall = Some(scores.recall);
        metrics.f1 = Some(scores.f1);
        extraction_errors = Some(failures);
    } else if !pairs.is_empty() {
        let preds: Vec<String> = pairs.iter().map(|(p, _)| p.clone()).collect();
        let refs: Vec<String> = pairs.iter().map(|(_, r)| r.clone()).collect();
        // Inputs are already canonical, so exp_rate runs raw.
        metrics.exp_rate = Some(exp_rate(&preds, &refs, false)?);

        let mut bleu_sum = 0.0;
        let mut floored = 0usize;
        let mut distance = 0u64;
        let mut normalized_sum = 0.0;
        for (pred, reference) in &pairs {
            let cand: Vec<&str> = pred.split_whitespace().collect();
            let reference_tokens: Vec<&str> = reference.split_whitespace().collect();
            let score = bleu(&cand, &[reference_tokens], args.bleu_max_n);
            bleu_sum += score.score;
            floored += usize::from(score.floored);
            distance += edit_distance_chars(pred, reference) as u64;
            let pred_chars: Vec<char> = pred.chars().collect();
            let reference_chars: Vec<char> = reference.chars().collect();
            normalized_sum += normalized_edit_distance(&pred_chars, &reference_chars);
        }
        metrics.bleu = Some(bleu_sum / pairs.len() as f64);
        metrics.edit_distance = Some(distance);
        metrics.normalized_edit_distance = Some(normalized_sum / pairs.len() as f64);
        bleu_floored_pairs = Some(floored);
    }

    let input_name = args.input.display().to_string();
    let report = Report {
        config: Config {
            input: &input_name,
            normalize_first: args.normalize_first,
            mode: if args.table_cells { "table-cells" } else { "text" },
            bleu_max_n: args.bleu_max_n,
        },
        pairs: pairs.len(),
        bleu_floored_pairs,
        extraction_errors,
        metrics,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    crate::jsonl::write_out(args.out.as_deref(), &json)?;
    print_table(&report.metrics, report.pairs);
    Ok(0)
}

/// Human-readable companion to the JSON, one line per present metric.
fn print_table(metrics: &MetricsReport, pairs: usize) {
    eprintln!("{:<26} {}", "pairs", pairs);
    let row = |name: &str, value: String| eprintln!("{name:<26} {value}");
    if let Some(v) = metrics.precision {
        row("precision", format!("{v:.4}"));
    }
    if let Some(v) = metrics.recall {
        row("recall", format!("{v:.4}"));
    }
    if let Some(v) = metrics.f1 {
        row("f1", format!("{v:.4}"));
    }
    if let Some(v) = metrics.exp_rate {
        row("exp_rate", format!("{v:.4}"));
    }
    if let Some(v) = metrics.bleu {
        row("bleu", format!("{v:.4}"));
    }
    if let Some(v) = metrics.edit_distance {
        row("edit_distance", v.to_string());
    }
    if let Some(v) = metrics.normalized_edit_distance {
        row("normalized_edit_distance", format!("{v:.4}"));
    }
}
