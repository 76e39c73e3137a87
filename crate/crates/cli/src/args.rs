use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use conv_core::eval::ReportFormat;
use conv_core::lab::Fixture;
use conv_core::{Aggregation, Label, PerturbationSpec, Threshold};

#[derive(Debug, Parser)]
#[command(name = "conv", version, about = "Detect generated images by feature consistency under manifold-preserving transforms")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Toolkit config file (TOML or JSON); a run manifest also works.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads. 1 is the deterministic reference mode.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only print errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a directory of images into a feature file, optionally with transformed views.
    Extract(ExtractArgs),
    /// Score images or stored features and write per-sample verdicts.
    Detect(DetectArgs),
    /// Train the normalizing flow on natural and generated feature files.
    TrainFlow(TrainArgs),
    /// Compute AUROC, AP and accuracy from a scores file.
    Eval(EvalArgs),
    /// Re-score images under JPEG, blur and noise perturbations.
    Sweep(SweepArgs),
    /// Run the synthetic-manifold experiments.
    Lab(LabArgs),
    /// Inspect flow parameter files.
    #[command(subcommand)]
    Flow(FlowCommand),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// ONNX backbone graph; its `<model>.manifest.json` sidecar must exist.
    #[arg(long, env = "CONV_MODEL", value_name = "FILE")]
    pub model: Option<PathBuf>,

    /// Crop randomly (seeded) instead of centre-cropping after the resize.
    #[arg(long)]
    pub random_crop: bool,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    /// Transform rounds per image.
    #[arg(long, value_name = "N")]
    pub rounds: Option<usize>,

    /// Master seed for the transform draws.
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,

    /// `auto` (needs labels) or a fixed score threshold.
    #[arg(long, value_name = "auto|ALPHA")]
    pub threshold: Option<Threshold>,

    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum AggregationArg {
    Mean,
    Min,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Mean => Aggregation::Mean,
            AggregationArg::Min => Aggregation::Min,
        }
    }
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum LabelArg {
    Natural,
    Generated,
}

impl From<LabelArg> for Label {
    fn from(l: LabelArg) -> Self {
        match l {
            LabelArg::Natural => Label::Natural,
            LabelArg::Generated => Label::Generated,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub detector: DetectorArgs,

    /// Image directory. Labels come from a `natural/`, `real/`, `generated/` or `fake/` path component.
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Transformed views to store per image (view 0 is the original).
    #[arg(long, default_value_t = 0, value_name = "N")]
    pub views: usize,

    /// Label for every image, overriding the directory layout.
    #[arg(long, value_enum)]
    pub label: Option<LabelArg>,

    /// Store raw backbone outputs instead of L2-normalized ones.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub detector: DetectorArgs,

    /// Image directory, or a feature file with transformed views.
    #[arg(long, value_name = "DIR|FILE")]
    pub input: PathBuf,

    /// Score with a trained, calibrated flow instead of plain consistency.
    #[arg(long, value_name = "FILE")]
    pub flow: Option<PathBuf>,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature file with natural samples (and their views). May also hold generated samples.
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,

    /// Feature file with generated samples.
    #[arg(long, value_name = "FILE")]
    pub gen_features: Option<PathBuf>,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    #[arg(long, value_name = "E")]
    pub epochs: Option<usize>,

    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,

    #[arg(long = "lr", value_name = "LR")]
    pub learning_rate: Option<f64>,

    #[arg(long, value_name = "B")]
    pub batch_size: Option<usize>,

    /// Hidden width of the coupling nets.
    #[arg(long, value_name = "H")]
    pub hidden: Option<usize>,

    #[arg(long, value_name = "F")]
    pub val_fraction: Option<f64>,

    /// Training history CSV (default: `<out>.history.csv`).
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV with columns sample_id, label, score[, verdict, source_id].
    #[arg(long, value_name = "FILE")]
    pub scores: PathBuf,

    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Report format; defaults to the output extension.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<ReportFormat>,

    /// Write the ROC curve as SVG.
    #[arg(long, value_name = "FILE")]
    pub roc: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub detector: DetectorArgs,

    /// Labelled image directory.
    #[arg(long, value_name = "DIR")]
    pub input: PathBuf,

    /// Perturbations such as `jpeg:100,90,70,50`, `blur:1,2`, `noise:0.05`; repeatable.
    #[arg(long, value_name = "KIND:LEVELS")]
    pub perturb: Vec<String>,

    #[arg(long, value_delimiter = ',', value_name = "Q,..")]
    pub jpeg_q: Vec<u8>,

    #[arg(long, value_delimiter = ',', value_name = "SIGMA,..")]
    pub noise_sigma: Vec<f64>,

    #[arg(long, value_delimiter = ',', value_name = "SIGMA,..")]
    pub blur_sigma: Vec<f64>,

    /// Score with a trained, calibrated flow.
    #[arg(long, value_name = "FILE")]
    pub flow: Option<PathBuf>,

    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LabArgs {
    #[arg(long, default_value = "circle")]
    pub fixture: Fixture,

    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1", value_name = "E,..")]
    pub epsilons: Vec<f64>,

    /// Random points per epsilon.
    #[arg(long, default_value_t = 1000)]
    pub points: usize,

    /// Tangent step of h.
    #[arg(long, default_value_t = 0.1)]
    pub dtheta: f64,

    /// Tolerance for the orthogonality checks.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum FlowCommand {
    /// Print dimension, hidden width, parameter count and calibration.
    Info {
        file: PathBuf,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: conv_core::ConvError| e.to_string())
}

/// Expand `kind:l1,l2,...` into one spec per level.
pub fn expand_perturbations(arg: &str) -> Result<Vec<PerturbationSpec>, String> {
    let (kind, levels) = match arg.split_once(':') {
        Some(p) => p,
        None => return arg.parse().map(|s| vec![s]).map_err(|e: conv_core::ConvError| e.to_string()),
    };
    levels
        .split(',')
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            format!("{kind}:{}", l.trim())
                .parse()
                .map_err(|e: conv_core::ConvError| e.to_string())
        })
        .collect()
}
