//! The `miest` command line.
//!
//! Every subcommand takes an optional `--config FILE` holding a JSON object
//! whose keys are the long flag names in snake case. Flags given on the
//! command line win over the file; unknown keys are ignored.

mod commands;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use commands::{Envelope, REPORT_FORMAT_VERSION};

/// Exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit status when a well-formed command fails while running.
pub const EXIT_RUNTIME: i32 = 1;
/// Exit status for malformed or inconsistent flags.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Identifies the binary in every report; set `MIEST_BUILD_ID` at compile
/// time (for example to `git describe` output) to override the version tag.
pub fn build_id() -> &'static str {
    option_env!("MIEST_BUILD_ID").unwrap_or(concat!("v", env!("CARGO_PKG_VERSION")))
}

#[derive(Debug, Parser)]
#[command(name = "miest", version, about = "Classifiers as mutual-information estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the Gaussian-mixture benchmark and its Monte-Carlo MI oracle.
    GenSynth(Configured<GenSynthArgs>),
    /// Train a classifier on a synthetic or double-digit dataset.
    Train(Configured<TrainArgs>),
    /// Read the mutual information off a trained model's logits.
    EstimateMi(Configured<EstimateMiArgs>),
    /// Classification metrics of a trained model.
    Evaluate(Configured<EvaluateArgs>),
    /// Compose a double-digit localisation dataset.
    MakeMmnist(Configured<MakeMmnistArgs>),
    /// Export intensity maps of one canvas as PGM images.
    Cam(Configured<CamArgs>),
    /// GT-Loc and Top-1-Loc of a trained model.
    Locate(Configured<LocateArgs>),
}

#[derive(Debug, Args)]
struct Configured<T: Args> {
    /// JSON object of defaults; explicit flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    args: T,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GenSynthArgs {
    /// Input dimension D (≥ 1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// 12,000 samples per class.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub balanced: bool,
    /// Comma-separated per-class counts, one per mixture component.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Monte-Carlo sample count of the MI oracle.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// A `gen-synth` or `make-mmnist` output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// softmax, pc-softmax, sigmoid or pc-sigmoid.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_out: Option<PathBuf>,
    /// Per-epoch CSV log.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Hidden width of the MLP.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    /// Number of hidden MLP layers.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EstimateMiArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// A `gen-synth` output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// train, val, test or all (default test).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    /// Report file; stdout when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// A `gen-synth` or `make-mmnist` output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Synthetic data only: train, val, test or all (default test).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct MakeMmnistArgs {
    /// Number of canvases.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Draw digits from the built-in bitmap font instead of IDX files.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub synthetic_digits: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub idx_images: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub idx_labels: Option<PathBuf>,
    /// Synthetic digits generated per class.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_per_class: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct CamArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// A `make-mmnist` output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Canvas index.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    /// Class to explain; defaults to the canvas's first label.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    /// Comma-separated subset of cam, infocam, infocam-plus.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<usize>,
    /// Resample maps bilinearly to the canvas size.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub upsample: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct LocateArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// A `make-mmnist` output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// One or more of cam, infocam, infocam-plus.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_ratio: Option<f64>,
    /// infoCAM+ picks one competitor from the image logits, not per window.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub global_argmin: bool,
    /// Directory receiving `locate-<mode>.json`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Overlays the explicitly given flags on the config file's object.
fn merge_config<T: Serialize + DeserializeOwned>(config: Option<&Path>, args: T) -> CliResult<T> {
    let Some(path) = config else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    let mut base: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    let serde_json::Value::Object(base_map) = &mut base else {
        return Err(CliError::usage(format!(
            "config {} must hold a JSON object",
            path.display()
        )));
    };
    let serde_json::Value::Object(flags) =
        serde_json::to_value(args).map_err(crate::Error::from)?
    else {
        unreachable!("argument structs serialise to objects");
    };
    base_map.extend(flags);
    serde_json::from_value(base)
        .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::GenSynth(c) => commands::gen_synth(merge_config(c.config.as_deref(), c.args)?),
        Command::Train(c) => commands::train(merge_config(c.config.as_deref(), c.args)?),
        Command::EstimateMi(c) => commands::estimate_mi_cmd(merge_config(c.config.as_deref(), c.args)?),
        Command::Evaluate(c) => commands::evaluate(merge_config(c.config.as_deref(), c.args)?),
        Command::MakeMmnist(c) => commands::make_mmnist(merge_config(c.config.as_deref(), c.args)?),
        Command::Cam(c) => commands::cam(merge_config(c.config.as_deref(), c.args)?),
        Command::Locate(c) => commands::locate(merge_config(c.config.as_deref(), c.args)?),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
