//! Command-line harness: synthetic sequence generation, image and video
//! evaluation, loss breakdowns, attention gradient checks, and report merging.

pub mod commands;
mod inputs;
mod output;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geomcheck::metrics::{Aggregation, DEFAULT_THRESHOLDS};

#[derive(Debug, Parser)]
#[command(
    name = "geomcheck",
    version,
    about = "Geometry loss and metric toolkit"
)]
pub struct Cli {
    /// Worker threads for per-frame work (0 = one per core, at most 8).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a walker sequence with depth, normals, masks and flows.
    GenSynth(GenSynthArgs),
    /// Per-image depth and normal metrics.
    EvalImages(EvalImagesArgs),
    /// Flow-based temporal consistency metrics.
    EvalVideo(EvalVideoArgs),
    /// Stage-1 and Stage-2 loss breakdowns.
    Loss(LossArgs),
    /// Attention-gate gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Merge JSON summaries into one long-format CSV table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub frames: u64,
    /// Square image size in pixels.
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(8..=4096))]
    pub size: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportPaths {
    /// Per-frame (or per-pair) CSV output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Summary JSON output; printed to stdout when omitted.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalImagesArgs {
    /// Prediction manifest.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth manifest; its masks select evaluated pixels.
    #[arg(long)]
    pub gt: PathBuf,
    /// Fit a per-image scale and shift before the depth metrics.
    #[arg(long)]
    pub aligned: bool,
    /// Angular thresholds in degrees for Acc, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS.to_vec())]
    pub thresholds: Vec<f64>,
    #[arg(long, value_enum, default_value_t = AggregationArg::PerImage)]
    pub aggregation: AggregationArg,
    #[command(flatten)]
    pub out: ReportPaths,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    PerImage,
    Pooled,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::PerImage => Aggregation::PerImage,
            AggregationArg::Pooled => Aggregation::Pooled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthAlignment {
    None,
    PerFrame,
    PerSequence,
}

#[derive(Debug, Args)]
pub struct EvalVideoArgs {
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth manifest; supplies masks, reference normals and, by default, flows.
    #[arg(long)]
    pub gt: PathBuf,
    /// Manifest whose forward flows replace the ground-truth ones.
    #[arg(long)]
    pub flows: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DepthAlignment::PerSequence)]
    pub depth_alignment: DepthAlignment,
    #[command(flatten)]
    pub out: ReportPaths,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long, required_unless_present = "print_config")]
    pub pred: Option<PathBuf>,
    #[arg(long, required_unless_present = "print_config")]
    pub gt: Option<PathBuf>,
    /// Loss configuration (`.toml` or JSON); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub print_config: bool,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of seeded instances, starting at `--seed`.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub instances: u64,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    /// Hidden width; defaults to ceil(channels / 4).
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub height: usize,
    #[arg(long, default_value_t = 4)]
    pub width: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    /// Pass threshold on the maximum relative error.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    /// Perturb the analytic gradient to exercise the failure path.
    #[arg(long, hide = true)]
    pub corrupt: bool,
    /// Use an all-zero upstream gradient.
    #[arg(long)]
    pub zero_upstream: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Summary JSON files written by eval-images, eval-video, loss or gradcheck.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit status of a completed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// The computation ran but a validation it reports on failed.
    CheckFailed,
}

/// Runs one parsed invocation, writing human-facing output to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> anyhow::Result<Status> {
    let pool = worker_pool(cli.jobs)?;
    match cli.command {
        Command::GenSynth(a) => commands::gen_synth(&a, stdout),
        Command::EvalImages(a) => commands::eval_images(&a, &pool, stdout),
        Command::EvalVideo(a) => commands::eval_video(&a, &pool, stdout),
        Command::Loss(a) => commands::loss(&a, &pool, stdout),
        Command::Gradcheck(a) => commands::gradcheck(&a, stdout),
        Command::Report(a) => commands::report(&a, stdout),
    }
}

fn worker_pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    let n = match jobs {
        0 => std::thread::available_parallelism()
            .map_or(1, |n| n.get())
            .min(8),
        n => n,
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}
