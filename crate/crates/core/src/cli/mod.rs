//! Command-line front end: `gen-data`, `train`, `attack`, `sweep`, `report`
//! and `defaults`.

mod commands;
mod config;
pub mod pnm;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{CheckpointMeta, META_NAME};
pub use config::{
    AttackSection, DatasetKind, DatasetSection, OutputSection, ReportFormat, RunConfig, DEFAULT_SEED, SEED_ENV,
};

use crate::arl::Method;
use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_CORRUPT: i32 = 5;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Diverged { .. } => EXIT_DIVERGED,
        Error::Corrupt(_) | Error::VersionMismatch { .. } => EXIT_CORRUPT,
        Error::Config(_)
        | Error::Validation(_)
        | Error::Parse { .. }
        | Error::Usage(_)
        | Error::Dimension(_)
        | Error::Index(_)
        | Error::UnsupportedSize { .. } => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "freqshield", version, about = "Frequency-filtered adversarial representation learning")]
pub struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AttackArg {
    Leakage,
    Reconstruction,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or import a dataset and export it to `dataset.dir`.
    GenData {
        /// Overwrite an existing export.
        #[arg(long)]
        force: bool,
    },
    /// Train one method, attack it with a fresh adversary, save checkpoints
    /// and append a report row.
    Train {
        /// Overrides `arl.method`.
        #[arg(long, value_parser = parse_method)]
        mode: Option<Method>,
        /// Also compute performance bounds (trains an extra identity model).
        #[arg(long)]
        bounds: bool,
        /// Overwrite existing checkpoints for this method.
        #[arg(long)]
        force: bool,
    },
    /// Attack a frozen obfuscator loaded from a checkpoint directory.
    Attack {
        #[arg(long)]
        checkpoint_dir: PathBuf,
        #[arg(long, value_enum)]
        kind: AttackArg,
    },
    /// Train and attack the configured method at several low-pass radii.
    Sweep {
        /// Comma-separated normalized radii, e.g. 0.02,0.05,0.15,0.4
        #[arg(long, value_delimiter = ',', required = true)]
        radii: Vec<f64>,
        /// Overwrite an existing sweep directory.
        #[arg(long)]
        force: bool,
    },
    /// Print all report rows as a table sorted by delta.
    Report {
        /// Defaults to `output.dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print the default configuration.
    Defaults,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Runs the command line `args` (including the program name), writing
/// normal output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match commands::dispatch(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
