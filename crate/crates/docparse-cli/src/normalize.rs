//! `docparse normalize`: streams a JSON Lines corpus through the
//! rewrite rules, one record in memory at a time. Records that fail to
//! parse or normalize are logged with their line number, counted, and
//! skipped; the run continues.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use docparse::latex::{measure_reduction, normalize, RuleSet};

#[derive(clap::Args)]
pub struct Args {
    /// JSON Lines input, one {"id", "latex"} per line
    #[arg(long)]
    input: PathBuf,
    /// JSON Lines output with normalized text and per-record reduction
    #[arg(long)]
    output: PathBuf,
    /// Rule subset, comma separated: bracket, fraction, subsup, prime, space
    #[arg(long, value_delimiter = ',')]
    rules: Option<Vec<String>>,
    /// Summary path; stdout when omitted
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(serde::Deserialize)]
struct RecordIn {
    id: serde_json::Value,
    latex: String,
}

#[derive(serde::Serialize)]
struct RecordOut<'a> {
    id: &'a serde_json::Value,
    latex: &'a str,
    normalized: &'a str,
    reduction: f64,
}

#[derive(serde::Serialize)]
struct Summary<'a> {
    input: &'a str,
    output: &'a str,
    rules: RuleSet,
    records: usize,
    errors: usize,
    mean_reduction: Option<f64>,
    median_reduction: Option<f64>,
}

pub fn run(args: Args) -> anyhow::Result<u8> {
    let rules = match &args.rules {
        Some(names) => RuleSet::from_names(names)?,
        None => RuleSet::all(),
    };
    let input = File::open(&args.input)
        .with_context(|| format!("cannot open {}", args.input.display()))?;
    let output = File::create(&args.output)
        .with_context(|| format!("cannot create {}", args.output.display()))?;
    let mut writer = BufWriter::new(output);

    let mut reductions = Vec::new();
    let mut errors = 0usize;
    for (index, line) in BufReader::new(input).lines().enumerate() {
        let line = line.with_context(|| format!("{}:{}", args.input.display(), index + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RecordIn = match serde_json::from_str(&line) {
            Ok(record) => record,
            Err(err) => {
                eprintln!("{}:{}: bad record: {err}", args.input.display(), index + 1);
                errors += 1;
                continue;
            }
        };
        let normalized = match normalize(&record.latex, &rules) {
            Ok(normalized) => normalized,
            Err(err) => {
                eprintln!("{}:{}: {err}", args.input.display(), index + 1);
                errors += 1;
                continue;
            }
        };
        let reduction = match measure_reduction(&record.latex, &normalized) {
            Ok(reduction) => reduction,
            Err(err) => {
                eprintln!("{}:{}: {err}", args.input.display(), index + 1);
                errors += 1;
                continue;
            }
        };
        let out = RecordOut {
            id: &record.id,
            latex: &record.latex,
            normalized: &normalized,
            reduction,
        };
        serde_json::to_writer(&mut writer, &out)?;
        writer.write_all(b"\n")?;
        reductions.push(reduction);
    }
    writer.flush()?;

    let input_name = args.input.display().to_string();
    let output_name = args.output.display().to_string();
    let summary = Summary {
        input: &input_name,
        output: &output_name,
        rules,
        records: reductions.len(),
        errors,
        mean_reduction: mean(&reductions),
        median_reduction: median(&mut reductions),
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    crate::jsonl::write_out(args.summary.as_deref(), &json)?;
    eprintln!(
        "normalize: {} records, {} errors, mean reduction {}",
        summary.records,
        summary.errors,
        summary.mean_reduction.map_or("-".into(), |m| format!("{m:.3}"))
    );
    Ok(0)
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}
