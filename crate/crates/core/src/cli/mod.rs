//! The `erasure` command-line tool.
//!
//! Exit codes: 0 on success, 1 on runtime errors, 2 on usage errors. Errors
//! are reported on stderr as `{"error_kind", "message", "module"}` JSON.

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;

pub use config::Settings;
pub use manifest::{RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "erasure", version, about = "Fit and evaluate linear concept-erasure projections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an erasure projection.
    Erase(EraseArgs),
    /// Apply a saved projection to a vectors file.
    Apply(ApplyArgs),
    /// Measure what a representation (optionally projected) still encodes.
    Eval(EvalArgs),
    /// Write a synthetic fixture.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Flat `key = value` settings file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any setting, e.g. `--set lr_theta=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Print the resolved settings and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct EraseArgs {
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub rank: Option<String>,
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Word pairs (`id1 id2` or `id1,id2` per line) for pca-diff.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub pca_dim: Option<usize>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub projection: PathBuf,
    #[arg(long)]
    pub vectors: PathBuf,
    /// Output directory for `vectors.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub projection: Option<PathBuf>,
    /// Linear probe accuracy on a held-out split.
    #[arg(long)]
    pub probe: bool,
    /// WEAT word sets as JSON `{X, Y, A, B}`.
    #[arg(long)]
    pub weat: Option<PathBuf>,
    /// k-means V-measure against the labels.
    #[arg(long)]
    pub vmeasure: bool,
    #[arg(long, default_value = "2")]
    pub clusters: String,
    /// Predictions as `id true pred group` lines.
    #[arg(long)]
    pub tpr_gap: Option<PathBuf>,
    /// Similarity pairs CSV `id1,id2,score`.
    #[arg(long)]
    pub simpairs: Option<PathBuf>,
    /// Re-fit for every rank in `A..B` and record probe accuracy.
    #[arg(long)]
    pub sweep_rank: Option<String>,
    /// Parallel workers for independent sweep fits.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// planted-1d, planted-3d, multi-separable, no-signal or blobs.
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub kind: String,
    pub message: String,
    pub module: String,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error_kind: &'a str,
    message: &'a str,
    module: &'a str,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            exit_code: 2,
            kind: "usage".into(),
            message: message.into(),
            module: "cli".into(),
        }
    }

    pub fn runtime(err: Error, module: &str) -> Self {
        CliError {
            exit_code: 1,
            kind: err.kind().into(),
            message: err.to_string(),
            module: module.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorReport {
            error_kind: &self.kind,
            message: &self.message,
            module: &self.module,
        })
        .unwrap_or_else(|_| format!("{{\"error_kind\":\"{}\"}}", self.kind))
    }
}

/// Tags library errors with the module they came from.
pub(crate) trait InModule<T> {
    fn in_module(self, module: &str) -> Result<T, CliError>;
}

impl<T> InModule<T> for crate::error::Result<T> {
    fn in_module(self, module: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::runtime(e, module))
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(Error::Format(e.to_string()), "cli"))?;
    text.push('\n');
    write_text(path, &text)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::runtime(Error::io(path, e), "cli"))
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(Error::io(dir, e), "cli"))
}

/// Runs one invocation and returns its exit code. Normal output goes to
/// stdout; errors go to stderr as JSON.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code;
        }
    };
    let result = match cli.command {
        Command::Erase(a) => commands::erase(a),
        Command::Apply(a) => commands::apply(a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code
        }
    }
}
