//! `provlabel`: validate and analyze workflow grammars, derive and label runs,
//! label views, answer reachability queries and benchmark the scheme.
//!
//! Exit codes: 0 success, 2 input error, 3 unsafe or unlabelable grammar.
//! `query` exits 0 when reachable and 1 when not; `oracle-check` exits 1 on
//! any mismatch.

mod bench;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use provlabel::Variant;

#[derive(Parser)]
#[command(name = "provlabel", version, about = "View-adaptive reachability labels for workflow provenance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a grammar file for structural problems.
    Validate {
        #[arg(long)]
        grammar: PathBuf,
    },
    /// Classify recursion, check safety and print the full dependency assignment.
    Analyze {
        #[arg(long)]
        grammar: PathBuf,
    },
    /// Write a synthetic grammar, a safe view and a derivation log.
    Generate(commands::GenerateArgs),
    /// Derive a random run, or replay and summarize an existing log.
    Derive {
        #[arg(long)]
        grammar: PathBuf,
        /// Log to replay instead of deriving a new run.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Target item count of a new run.
        #[arg(long, default_value_t = 1000)]
        items: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Where to write the new log (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label every data item of a run.
    LabelRun {
        #[arg(long)]
        grammar: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Label store to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Label a view.
    LabelView {
        #[arg(long)]
        grammar: PathBuf,
        /// View file; the default view when absent.
        #[arg(long)]
        view: Option<PathBuf>,
        #[arg(long, default_value = "default")]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Does item `--to` depend on item `--from` in the labeled view?
    Query {
        #[arg(long)]
        grammar: PathBuf,
        /// Label store written by `label-run`.
        #[arg(long, alias = "run")]
        labels: PathBuf,
        /// View label written by `label-view`.
        #[arg(long)]
        view: PathBuf,
        /// Source item, `dN` for the N-th item (1-based) or a bare number.
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
    /// Compare decoded answers with a brute-force search over the run.
    OracleCheck(commands::OracleArgs),
    /// Run the measurement harness and write CSV files.
    Bench(bench::BenchArgs),
}

/// A failure with its exit code.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn input(error: impl Into<anyhow::Error>) -> Failure {
        Failure { code: 2, error: error.into() }
    }

    pub fn refused(error: impl Into<anyhow::Error>) -> Failure {
        Failure { code: 3, error: error.into() }
    }
}

impl From<provlabel::AnalysisError> for Failure {
    fn from(e: provlabel::AnalysisError) -> Failure {
        match e {
            provlabel::AnalysisError::Model(_) => Failure::input(e),
            _ => Failure::refused(e),
        }
    }
}

macro_rules! input_errors {
    ($($t:ty),*) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Failure {
                Failure::input(e)
            }
        })*
    };
}

input_errors!(
    provlabel::ModelError,
    provlabel::RunError,
    provlabel::CodecError,
    provlabel::DecodeError,
    provlabel::synth::GenError,
    std::io::Error,
    anyhow::Error
);

pub type CmdResult = Result<u8, Failure>;

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Validate { grammar } => commands::validate(&grammar),
        Command::Analyze { grammar } => commands::analyze(&grammar),
        Command::Generate(a) => commands::generate(&a),
        Command::Derive {
            grammar,
            log,
            items,
            seed,
            out,
        } => commands::derive(&grammar, log.as_deref(), items, seed, out.as_deref()),
        Command::LabelRun { grammar, log, out } => commands::label_run(&grammar, &log, &out),
        Command::LabelView {
            grammar,
            view,
            variant,
            out,
        } => commands::label_view(&grammar, view.as_deref(), variant, &out),
        Command::Query {
            grammar,
            labels,
            view,
            from,
            to,
        } => commands::query(&grammar, &labels, &view, &from, &to),
        Command::OracleCheck(a) => commands::oracle_check(&a),
        Command::Bench(a) => bench::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
