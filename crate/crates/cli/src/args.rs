use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

/// Action-agnostic point-label pipeline for temporal action detection.
///
/// Logging goes to stderr; set AAPL_LOG (e.g. `info`, `debug`) for more.
#[derive(Debug, Parser)]
#[command(name = "aapl", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags every subcommand accepts.
#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long)]
    pub seed: Option<u64>,

    /// JSON file with settings for this command; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit a sampling plan per manifest video (or for one --duration).
    /// Deterministic for a fixed --seed.
    Sample(SampleArgs),

    /// Sample frames and label them from the manifest ground truth.
    /// Deterministic for a fixed --seed.
    AnnotateOracle(OracleArgs),

    /// Run the annotation HTTP service. --seed is the allocation seed for
    /// projects created without one.
    Serve(ServeArgs),

    /// Train a model. Deterministic for a fixed --seed: identical inputs give
    /// byte-identical loss.csv and checkpoints.
    Train(TrainArgs),

    /// Detect action instances with a trained checkpoint. Uses no randomness.
    Detect(DetectArgs),

    /// Evaluate predictions against ground truth. Uses no randomness.
    Eval(EvalArgs),

    /// Annotation cost estimates from the measured time tables. Uses no
    /// randomness.
    Cost(CostArgs),

    /// Generate a synthetic dataset with ground truth and point labels.
    /// Deterministic for a fixed --seed.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Regular,
    Random,
    Clustering,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    #[arg(long)]
    pub method: Option<Method>,

    /// Seconds between sampled frames (the label budget for random and
    /// clustering sampling).
    #[arg(long)]
    pub interval: Option<f64>,

    /// PCA dimensions before k-means (clustering only).
    #[arg(long)]
    pub pca_dims: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampling: SamplingArgs,

    #[arg(long, required_unless_present = "duration", conflicts_with = "duration")]
    pub manifest: Option<PathBuf>,

    /// Plan a single video of this many seconds instead of a manifest.
    #[arg(long)]
    pub duration: Option<f64>,

    /// Directory holding feature files (replaces the manifest directory).
    #[arg(long)]
    pub features_dir: Option<PathBuf>,

    /// Output JSON file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampling: SamplingArgs,

    #[arg(long)]
    pub manifest: PathBuf,

    #[arg(long)]
    pub features_dir: Option<PathBuf>,

    /// Plans written by `sample`; sampling flags are ignored when given.
    #[arg(long)]
    pub plans: Option<PathBuf>,

    /// Directory for one `<video_id>.json` label file per video; stdout when
    /// absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,

    /// Listen address, e.g. 127.0.0.1:8080.
    #[arg(long)]
    pub addr: Option<String>,

    /// State directory; the append log lives at `<out>/annotations.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Directory of extracted frames, `<frames_dir>/<video_id>/<t>.jpg`.
    #[arg(long)]
    pub frames_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long)]
    pub manifest: PathBuf,

    /// Label file or directory of label files.
    #[arg(long)]
    pub labels: PathBuf,

    #[arg(long)]
    pub features_dir: Option<PathBuf>,

    /// Settings preset; --config overrides individual fields.
    #[arg(long, default_value = "thumos")]
    pub preset: String,

    #[arg(long)]
    pub iterations: Option<usize>,

    /// Output directory for loss.csv, config.json and checkpoints.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long)]
    pub manifest: PathBuf,

    #[arg(long)]
    pub checkpoint: PathBuf,

    #[arg(long)]
    pub features_dir: Option<PathBuf>,

    /// Predictions JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long)]
    pub manifest: PathBuf,

    #[arg(long)]
    pub predictions: PathBuf,

    /// Threshold set of this dataset.
    #[arg(long, default_value = "thumos")]
    pub preset: String,

    /// Report JSON; the table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[command(flatten)]
    pub common: Common,

    /// thumos, gtea or beoid.
    #[arg(long)]
    pub dataset: Option<String>,

    /// full, video, point or aapl-<seconds>s; repeatable.
    #[arg(long = "scheme")]
    pub schemes: Vec<String>,

    /// raw or with_self_check.
    #[arg(long)]
    pub variant: Option<String>,

    /// Minutes of video to annotate.
    #[arg(long)]
    pub minutes: Option<f64>,

    /// Trade-off CSV (scheme,relative_time,metric).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelSamplingArg {
    Regular,
    Random,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,

    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,

    #[arg(long, value_enum, default_value = "regular")]
    pub sampling: LabelSamplingArg,

    /// Seed of the class means; defaults to --seed. Splits that share it
    /// share a distribution.
    #[arg(long)]
    pub means_seed: Option<u64>,

    #[arg(long)]
    pub videos: Option<usize>,
}
