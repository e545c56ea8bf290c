//! Command-line operator surface for the report generator: data generation,
//! training, report generation, evaluation, and post-hoc analysis.
//!
//! Every command is a pure function of its arguments and input files; runs
//! with the same config and seed produce byte-identical outputs. Errors are
//! reported as a single machine-parsable line on standard error and mapped
//! to stable exit codes.

pub mod args;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod executor;
pub mod manifest;
pub mod pgm;
pub mod runlog;

use radgen_core::model::ModelError;
use radgen_core::tensor::TensorError;
use radgen_core::training::TrainError;

/// Process exit codes: 0 success, 1 usage, 2 data, 3 numeric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad arguments, unknown flags or config keys, invalid hyperparameters.
    Usage(String),
    /// Missing or malformed input files, or inputs inconsistent with each
    /// other (wrong image size, mismatched prediction/reference sets, ...).
    Data(String),
    /// Training or evaluation produced NaN or infinity.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }

    /// The one-line stderr form: `radgen: error: <kind>: <message>`.
    /// Newlines in the message are flattened so the line stays a line.
    pub fn render(&self) -> String {
        let flat = self.message().replace('\n', "; ");
        format!("radgen: error: {}: {}", self.kind(), flat)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match &e {
            TrainError::NonFiniteLoss { .. } | TrainError::Optim(_) => {
                CliError::Numeric(e.to_string())
            }
            TrainError::Model(ModelError::Tensor(TensorError::NonFinite { .. }))
            | TrainError::Model(ModelError::Tensor(TensorError::NotScalar { .. })) => {
                CliError::Numeric(e.to_string())
            }
            TrainError::BadConfig { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match &e {
            ModelError::Tensor(TensorError::NonFinite { .. }) => CliError::Numeric(e.to_string()),
            ModelError::BadConfig { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Wrap an IO error with the path it concerns.
pub fn io_at(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {}", path.display(), e))
}

const USAGE: &str = "usage: radgen <command> [flags]

commands:
  gen-data   --n <studies> --seed <u64> --out <dir>
             [--image-size <px>] [--noise <0..0.5>] [--max-fillers <n>]
  train      --config <toy|paper|path> --data <manifest|dir> --out <dir>
             [--single-view] [--no-context] [--no-curriculum] [--no-cls]
  generate   --checkpoint <file> --data <manifest|dir> --split <name> --out <dir>
  eval       --predictions <file> --references <file> --out <dir>
  analyze    --run-a <dir>... [--run-b <dir>...] --out <dir> [--bucket-width <n>]

`radgen <command> --help` describes one command; `radgen --help` also lists
every config key. Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
Set RADGEN_VERBOSE=1 for progress notes on standard error.";

/// Dispatch `args` (without the program name) and return the exit code.
pub fn run(args: Vec<String>) -> i32 {
    match dispatch(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.render());
            e.exit_code()
        }
    }
}

fn dispatch(args: &[String]) -> Result<(), CliError> {
    let Some(cmd) = args.first() else {
        println!("{USAGE}");
        return Err(CliError::Usage(String::from("no command given")));
    };
    let rest = &args[1..];
    match cmd.as_str() {
        "--help" | "-h" | "help" => {
            println!("{USAGE}\n\nconfig keys (train --config):\n{}", config::key_help());
            Ok(())
        }
        "gen-data" => commands::gen_data::run(rest),
        "train" => commands::train::run(rest),
        "generate" => commands::generate::run(rest),
        "eval" => commands::eval::run(rest),
        "analyze" => commands::analyze::run(rest),
        other => Err(CliError::Usage(format!(
            "unknown command `{other}` (try `radgen --help`)"
        ))),
    }
}

/// True when RADGEN_VERBOSE is set to something other than "" or "0".
pub fn verbose() -> bool {
    std::env::var("RADGEN_VERBOSE").map(|v| !v.is_empty() && v != "0").unwrap_or(false)
}

/// Progress note on stderr, shown only in verbose mode.
pub fn note(msg: &str) {
    if verbose() {
        eprintln!("radgen: {msg}");
    }
}
