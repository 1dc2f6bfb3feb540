//! `docparse csr`: compiles each sample with an external LaTeX
//! compiler and reports the compilable fraction. No compiler means an
//! explicit "unavailable" outcome with exit 0, never a silent zero.
//!
//! The work directory holds per-sample sources and logs but stays out
//! of the JSON report: it is execution detail, and keeping it out makes
//! same-config runs byte-comparable.

use std::path::PathBuf;
use std::time::Duration;

use docparse::metrics::{csr, CsrOutcome};

/// Flag, then environment, then the conventional default.
const COMPILER_ENV: &str = "DOCPARSE_COMPILER";
const TMPDIR_ENV: &str = "DOCPARSE_TMPDIR";
const DEFAULT_COMPILER: &str = "pdflatex -interaction=nonstopmode -halt-on-error";

#[derive(clap::Args)]
pub struct Args {
    /// JSON Lines input, one {"id", "latex"} per line
    #[arg(long)]
    input: PathBuf,
    /// Compiler program with leading arguments
    #[arg(long)]
    compiler: Option<String>,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    /// Root for per-sample build directories
    #[arg(long)]
    workdir: Option<PathBuf>,
    /// Report path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(serde::Deserialize)]
struct RecordIn {
    id: serde_json::Value,
    latex: String,
}

#[derive(serde::Serialize)]
struct Report<'a> {
    config: Config<'a>,
    outcome: CsrOutcome,
}

#[derive(serde::Serialize)]
struct Config<'a> {
    input: &'a str,
    compiler: &'a str,
    timeout_secs: u64,
}

pub fn run(args: Args) -> anyhow::Result<u8> {
    let compiler = resolve_compiler(
        args.compiler
            .or_else(|| std::env::var(COMPILER_ENV).ok())
            .unwrap_or_else(|| DEFAULT_COMPILER.to_string()),
    );
    let workdir = args
        .workdir
        .or_else(|| std::env::var(TMPDIR_ENV).ok().map(PathBuf::from))
        .unwrap_or_else(|| {
            std::env::temp_dir().join(format!("docparse-csr-{}", std::process::id()))
        });

    let records: Vec<RecordIn> = crate::jsonl::read_records(&args.input)?;
    let samples: Vec<(String, String)> = records
        .into_iter()
        .map(|r| (id_string(&r.id), r.latex))
        .collect();

    let outcome = csr(&samples, &compiler, Duration::from_secs(args.timeout_secs), &workdir)?;
    match (&outcome.value, &outcome.unavailable_reason) {
        (Some(value), _) => eprintln!(
            "csr: {}/{} compiled ({value:.3}), logs under {}",
            outcome.compiled,
            outcome.total,
            workdir.display()
        ),
        (None, reason) => eprintln!(
            "csr: unavailable ({})",
            reason.as_deref().unwrap_or("unknown")
        ),
    }

    let input_name = args.input.display().to_string();
    let report = Report {
        config: Config {
            input: &input_name,
            compiler: &compiler,
            timeout_secs: args.timeout_secs,
        },
        outcome,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    crate::jsonl::write_out(args.out.as_deref(), &json)?;
    Ok(0)
}

/// Bare program names keep their PATH lookup; a relative path with a
/// separator is anchored to the invocation directory, because the
/// compiler later runs from per-sample build directories.
fn resolve_compiler(command: String) -> String {
    let mut words = command.split_whitespace();
    let Some(program) = words.next() else {
        return command;
    };
    if program.contains('/') && !std::path::Path::new(program).is_absolute() {
        if let Ok(absolute) = std::fs::canonicalize(program) {
            let rest: Vec<&str> = words.collect();
            let mut resolved = absolute.display().to_string();
            if !rest.is_empty() {
                resolved.push(' ');
                resolved.push_str(&rest.join(" "));
            }
            return resolved;
        }
    }
    command
}

/// Sample ids become directory names, so strings stay bare while other
/// JSON values keep their compact form.
fn id_string(id: &serde_json::Value) -> String {
    match id {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
