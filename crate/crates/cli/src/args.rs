//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config_file::schema_help;

#[derive(Parser)]
#[command(
    name = "nice",
    version,
    about = "Additive-coupling normalizing flow: exact-likelihood training, sampling, inpainting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a model and keep the best checkpoint by validation log-likelihood
    Train(TrainArgs),
    /// Mean log-likelihood of a dataset split under a checkpoint
    Eval(EvalArgs),
    /// Draw ancestral samples from a checkpoint
    Sample(SampleArgs),
    /// Complete masked coordinates by projected noisy gradient ascent
    Inpaint(InpaintArgs),
    /// Export the sorted per-dimension scale spectrum of a checkpoint
    Spectrum(SpectrumArgs),
    /// Map a (rotated) latent 3-sphere to data space
    Manifold(ManifoldArgs),
    /// Fit a whitening transform and write the record file
    Whiten(WhitenArgs),
}

#[derive(Args)]
#[command(after_help = schema_help())]
pub struct TrainArgs {
    /// INI config file
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config key (repeatable): section.key=value
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Root seed (shorthand for --set train.seed=N, applied last)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory for metrics, config echo, and checkpoints
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl SplitName {
    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        }
    }
}

#[derive(Args)]
#[command(after_help = schema_help())]
pub struct EvalArgs {
    /// Checkpoint to evaluate
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// INI config file describing the dataset ([data] section)
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config key (repeatable): section.key=value
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Root seed (controls dequantization noise)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Which split to score
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    /// Directory for eval.txt and the config echo
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum MatrixFormat {
    Nicemat,
    Csv,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Nicemat => "mat",
            MatrixFormat::Csv => "csv",
        }
    }
}

#[derive(Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Number of samples
    #[arg(short = 'n', long = "count", default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Matrix output format
    #[arg(long, value_enum, default_value = "nicemat")]
    pub format: MatrixFormat,
    /// Value range mapped to black..white in the PGM grid, as "lo,hi"
    #[arg(long, default_value = "0,1")]
    pub range: String,
    #[arg(long)]
    pub output: PathBuf,
}

impl SampleArgs {
    pub fn range(&self) -> (f64, f64) {
        let parts: Vec<f64> = self
            .range
            .split(',')
            .filter_map(|p| p.trim().parse().ok())
            .collect();
        match parts[..] {
            [lo, hi] if lo < hi => (lo, hi),
            _ => (0.0, 1.0),
        }
    }
}

#[derive(Args)]
pub struct InpaintArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Task description file (see docs/formats.md)
    #[arg(long)]
    pub task: PathBuf,
    #[arg(long, value_enum, default_value = "nicemat")]
    pub format: MatrixFormat,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct ManifoldArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Latitude/longitude resolution; the output has grid*grid rows
    #[arg(long, default_value_t = 24)]
    pub grid: usize,
    /// Sphere radius in latent units (default: one prior standard deviation)
    #[arg(long)]
    pub radius: Option<f64>,
    /// Seed for the random rotation (default: --seed)
    #[arg(long)]
    pub rotation_seed: Option<u64>,
    /// Keep the sphere axis-aligned
    #[arg(long, default_value_t = false)]
    pub no_rotation: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "nicemat")]
    pub format: MatrixFormat,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum WhitenKind {
    Zca,
    Approximate,
}

#[derive(Args)]
#[command(after_help = schema_help())]
pub struct WhitenArgs {
    /// INI config file describing the dataset ([data] section)
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Which whitening to fit
    #[arg(long, value_enum)]
    pub kind: WhitenKind,
    #[arg(long)]
    pub output: PathBuf,
}
