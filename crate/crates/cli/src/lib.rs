//! `icfinv` experiment harness: dataset generation, sensitivity maps,
//! training runs, scale and pretraining studies, and SVG reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod study;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use icfinv_core::data::Regime;

pub use config::{GenerateConfig, RunConfig, StudyConfig, EFFECTIVE_CONFIG};
pub use error::{CliError, CliResult, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(
    name = "icfinv",
    version,
    about = "Multi-modal inverse estimation experiments on a synthetic implosion simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset and write it as a manifest plus raw arrays.
    Generate(GenerateArgs),
    /// Ridge sensitivity map of parameters on image PCs and scalars.
    Sensitivity(SensitivityArgs),
    /// Joint training of backbone and head, then test evaluation.
    Train(TrainArgs),
    /// Reconstruction-only backbone training, for finetuning later.
    Pretrain(PretrainArgs),
    /// Train on nested fractions of the training split over several seeds.
    Scale(ScaleArgs),
    /// Scratch against finetuned-from-pretrained runs per fraction.
    Compare(CompareArgs),
    /// Render plots and tables from an existing run directory.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Pretrain,
    Finetune,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Pretrain => Regime::Pretrain,
            RegimeArg::Finetune => Regime::Finetune,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Scratch,
    Checkpoint,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "r2-threshold")]
    pub r2_threshold: Option<f64>,
    /// Seed of the fit/held-out shuffle.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training overrides shared by the training commands.
#[derive(Debug, Default, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "warmup-epochs")]
    pub warmup_epochs: Option<usize>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long = "lr-backbone")]
    pub lr_backbone: Option<f64>,
    #[arg(long = "lr-tsh")]
    pub lr_tsh: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Checkpoint header to take the backbone from with `--init checkpoint`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Train on this fraction of the training split.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Comma-separated training fractions.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    /// Number of seeds per fraction.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Runs trained concurrently; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub study: StudyArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint header written by `pretrain`.
    #[arg(long = "pretrain-ckpt")]
    pub pretrain_ckpt: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub study: StudyArgs,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long = "run-dir")]
    pub run_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Sensitivity(a) => commands::sensitivity(&a),
        Command::Train(a) => commands::train(&a),
        Command::Pretrain(a) => commands::pretrain(&a),
        Command::Scale(a) => study::scale(&a),
        Command::Compare(a) => study::compare(&a),
        Command::Report(a) => commands::report(&a),
    }
}
