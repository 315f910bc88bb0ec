mod commands;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fcnseg::arch::{LoadMode, Variant};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fcnseg::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{failed} of {total} inputs failed")]
    Partial { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fcnseg", version, about = "Foot-ulcer segmentation with fully convolutional networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rasterize XML region annotations into paletted label PNGs plus a dataset manifest.
    Convert(ConvertArgs),
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Write the deterministic 5-fold train/validation/test plan for a dataset.
    Split(SplitArgs),
    /// Train one fold, optionally through a staged transfer-learning plan.
    Train(TrainArgs),
    /// Score a checkpoint (or precomputed predictions) on a fold's test split.
    Eval(EvalArgs),
    /// Merge evaluation outputs into a comparison table and Dice histograms.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// Directory of `*.xml` annotation files.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Directory holding the photographs named by each annotation's `image` attribute.
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKindArg {
    Ulcer,
    Healthy,
    Objects,
    Textures,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "ulcer")]
    pub kind: SynthKindArg,
    #[arg(long)]
    pub count: usize,
    /// Additional healthy (lesion-free) images appended to the same dataset.
    #[arg(long, default_value_t = 0)]
    pub healthy: usize,
    /// Square image extent in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Class count for `textures`.
    #[arg(long, default_value_t = 4)]
    pub classes: u8,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SplitArgs {
    /// Dataset directory containing `manifest.jsonl`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output fold-plan JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

/// Training options. Every field may also come from a `--run` JSON file; flags win.
#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<PathBuf>,
    #[arg(long)]
    pub fold: Option<usize>,
    /// fcn-alexnet, fcn-32s, fcn-16s or fcn-8s.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Channel-width multiplier (1.0 = published widths).
    #[arg(long)]
    pub width_scale: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub base_lr: Option<f64>,
    #[arg(long)]
    pub step_fraction: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Resize images and labels to this square extent on load.
    #[arg(long)]
    pub size: Option<usize>,
    /// Staged transfer-learning plan (JSON).
    #[arg(long)]
    pub tier_plan: Option<PathBuf>,
    /// Checkpoint to start from.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, value_parser = parse_load_mode)]
    pub load_mode: Option<LoadMode>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_load_mode(s: &str) -> Result<LoadMode, String> {
    match s {
        "strict" => Ok(LoadMode::Strict),
        "compatible" => Ok(LoadMode::Compatible),
        other => Err(format!("unknown load mode '{other}' (strict|compatible)")),
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Declarative run file (JSON object with the same keys as the flags, snake_case).
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[command(flatten)]
    pub options: TrainOptions,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Directory of `{id}.png` paletted predictions to score instead of running a model.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub folds: Option<PathBuf>,
    /// Fold whose test split is scored; without `--folds` every non-healthy item is scored.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    /// Row label in the summary table (defaults to the checkpoint's variant).
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    /// Evaluation output directories.
    #[arg(required = true)]
    pub evals: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Convert(a) => commands::convert(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Split(a) => commands::split(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Partial { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
