//! `docparse` command line. Every subcommand is deterministic given its
//! seed and flags, embeds its resolved configuration in the report it
//! writes, and keeps machine output (stdout or `--out`) separate from
//! progress text (stderr).
//!
//! Exit codes are a stable contract: 0 success, 1 a check or comparison
//! failed (bad gradients, diverged training), 2 usage or input errors.

use std::process::ExitCode;

use clap::Parser;

mod csr;
mod eval_detect;
mod eval_text;
mod gradcheck;
mod jsonl;
mod normalize;
mod plot;
mod train_toy;

#[derive(Parser)]
#[command(name = "docparse", version, about = "Document parsing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Check analytic loss gradients against finite differences
    Gradcheck(gradcheck::Args),
    /// Train the toy decoder under each objective on the same data
    TrainToy(train_toy::Args),
    /// Rewrite a LaTeX corpus into canonical form
    Normalize(normalize::Args),
    /// Score text predictions against references
    EvalText(eval_text::Args),
    /// Score detection predictions against ground truth
    EvalDetect(eval_detect::Args),
    /// Compile LaTeX samples and report the compilable fraction
    Csr(csr::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gradcheck(args) => gradcheck::run(args),
        Command::TrainToy(args) => train_toy::run(args),
        Command::Normalize(args) => normalize::run(args),
        Command::EvalText(args) => eval_text::run(args),
        Command::EvalDetect(args) => eval_detect::run(args),
        Command::Csr(args) => csr::run(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
