mod detect;
mod eval;
mod extract;
mod flow;
mod lab;
mod sweep;
mod train;

use std::fmt;
use std::path::Path;

use conv_core::embeddings::{CropMode, OnnxBackend};
use conv_core::flow::{load_flow, FlowModel};
use conv_core::parallel::Workers;
use conv_core::seed::derive_seed;
use conv_core::{Embedder, ImageTensor};

use crate::args::{Cli, Command, FlowCommand};
use crate::config::ToolkitConfig;
use crate::inputs::{load_image, ImageEntry};

/// A problem with how the tool was invoked, as opposed to with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = ToolkitConfig::resolve(&cli.global)?;
    match cli.command {
        Command::Extract(a) => extract::run(a, config),
        Command::Detect(a) => detect::run(a, config),
        Command::TrainFlow(a) => train::run(a, config),
        Command::Eval(a) => eval::run(a),
        Command::Sweep(a) => sweep::run(a, config),
        Command::Lab(a) => lab::run(a),
        Command::Flow(FlowCommand::Info { file }) => flow::info(&file),
    }
}

/// Images decoded per batch; bounds memory on large directories.
const IMAGE_BATCH: usize = 64;

/// Seed stream for random crops, kept apart from the transform rounds.
const CROP_STREAM: u64 = 0x43524f50;

fn crop_mode(random: bool, seed: u64, index: usize) -> CropMode {
    if random {
        CropMode::Random {
            seed: derive_seed(seed ^ CROP_STREAM, index as u64),
        }
    } else {
        CropMode::Center
    }
}

fn load_backend(path: &Path) -> anyhow::Result<OnnxBackend> {
    log::info!("loading backbone {}", path.display());
    Ok(OnnxBackend::load(path)?)
}

fn load_calibrated_flow(path: &Path, backend_dim: Option<usize>) -> anyhow::Result<FlowModel> {
    let flow = load_flow(path)?;
    if flow.calibration().is_none() {
        anyhow::bail!("{}: flow is not calibrated", path.display());
    }
    if let Some(d) = backend_dim {
        if d != flow.dim() {
            anyhow::bail!(
                "{}: flow dimension {} does not match backbone output {d}",
                path.display(),
                flow.dim()
            );
        }
    }
    Ok(flow)
}

/// Decode `entries` in batches and run `f` on each image in parallel,
/// keeping input order.
fn for_each_image<T: Send>(
    entries: &[ImageEntry],
    backend: &dyn Embedder,
    random_crop: bool,
    seed: u64,
    workers: &Workers,
    f: impl Fn(usize, &ImageTensor) -> anyhow::Result<T> + Sync + Send,
) -> anyhow::Result<Vec<T>> {
    let mut out = Vec::with_capacity(entries.len());
    for (b, batch) in entries.chunks(IMAGE_BATCH).enumerate() {
        let offset = b * IMAGE_BATCH;
        let results = workers.map(batch.len(), |j| {
            let i = offset + j;
            let img = load_image(&batch[j], backend.input_size(), crop_mode(random_crop, seed, i))?;
            f(i, &img)
        });
        for r in results {
            out.push(r?);
        }
        log::info!("processed {}/{} images", (offset + batch.len()), entries.len());
    }
    Ok(out)
}
