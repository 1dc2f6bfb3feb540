//! `docparse gradcheck`: finite-difference verification of every
//! analytic gradient, reported per case.

use std::path::PathBuf;
use std::time::Instant;

use docparse::loss::{run_gradcheck, GradcheckConfig};

#[derive(clap::Args)]
pub struct Args {
    /// Randomized instances per loss
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest tolerated relative error
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Negate analytic gradients before comparing; the check must then fail
    #[arg(long, hide = true)]
    inject_sign_flip: bool,
    /// Report path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: Args) -> anyhow::Result<u8> {
    let config = GradcheckConfig {
        instances: args.instances,
        step: args.step,
        tolerance: args.tolerance,
        seed: args.seed,
        inject_sign_flip: args.inject_sign_flip,
    };
    let started = Instant::now();
    let report = run_gradcheck(&config);
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    crate::jsonl::write_out(args.out.as_deref(), &json)?;
    eprintln!(
        "gradcheck: {} cases, worst relative error {:.3e}, {} [{:.1}s]",
        report.cases.len(),
        report.worst_rel_err,
        if report.passed { "pass" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    Ok(if report.passed { 0 } else { 1 })
}
