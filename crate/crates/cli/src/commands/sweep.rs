use anyhow::Context;
use conv_core::eval::{evaluate, robustness_sweep, score_images, write_report, ConvScorer, FconvScorer, LabeledImage, Scorer};
use conv_core::parallel::Workers;
use conv_core::{Embedder, PerturbationSpec};

use super::{crop_mode, load_backend, load_calibrated_flow, usage};
use crate::args::{expand_perturbations, SweepArgs};
use crate::config::ToolkitConfig;
use crate::inputs::{load_image, scan_images};
use crate::manifest::RunManifest;

fn grid(args: &SweepArgs, config: &ToolkitConfig) -> anyhow::Result<Vec<PerturbationSpec>> {
    let mut grid = Vec::new();
    for p in &args.perturb {
        grid.extend(expand_perturbations(p).map_err(usage)?);
    }
    grid.extend(args.jpeg_q.iter().map(|&quality| PerturbationSpec::Jpeg { quality }));
    grid.extend(args.blur_sigma.iter().map(|&sigma| PerturbationSpec::GaussianBlur { sigma }));
    grid.extend(args.noise_sigma.iter().map(|&sigma| PerturbationSpec::GaussianNoise { sigma }));
    if grid.is_empty() {
        grid = config.eval.perturbations.clone();
    }
    if grid.is_empty() {
        return Err(usage(
            "no perturbations given: use --perturb, --jpeg-q, --blur-sigma, --noise-sigma or [eval] perturbations",
        ));
    }
    for spec in &grid {
        spec.validate().map_err(|e| usage(e.to_string()))?;
    }
    Ok(grid)
}

pub fn run(args: SweepArgs, mut config: ToolkitConfig) -> anyhow::Result<()> {
    config.apply_detector_args(&args.detector);
    let detector = config.detector_config();
    detector.validate()?;
    let grid = grid(&args, &config)?;
    let model = config.model_path(args.model.model.as_ref()).map_err(|e| usage(e.to_string()))?;
    let backend = load_backend(&model)?;
    let flow = args
        .flow
        .as_deref()
        .map(|p| load_calibrated_flow(p, Some(backend.output_dim())))
        .transpose()?;

    let entries = scan_images(&args.input)?;
    let workers = Workers::new(config.jobs)?;
    let images = workers
        .map(entries.len(), |i| {
            let e = &entries[i];
            let label = e
                .label
                .ok_or_else(|| usage(format!("cannot tell the label of `{}` from its path", e.sample_id)))?;
            let image = load_image(e, backend.input_size(), crop_mode(args.model.random_crop, detector.seed, i))?;
            Ok(LabeledImage {
                sample_id: e.sample_id.clone(),
                label,
                source_id: e.source_id.clone(),
                image,
            })
        })
        .into_iter()
        .collect::<anyhow::Result<Vec<_>>>()?;

    let scorer: Box<dyn Scorer> = match &flow {
        Some(flow) => Box::new(FconvScorer {
            backend: &backend,
            flow,
            config: detector.clone(),
            weights: config.trainer.score_weights,
        }),
        None => Box::new(ConvScorer {
            backend: &backend,
            config: detector.clone(),
        }),
    };
    let clean = score_images(scorer.as_ref(), &images, config.jobs).context("scoring clean images")?;
    let mut report = evaluate(&clean)?;
    let rows = robustness_sweep(scorer.as_ref(), &images, &grid, detector.seed, config.jobs)?;
    for row in &rows {
        println!("{:<16} AUROC {:.4}  AP {:.4}  ACC {:.4}", row.perturbation.to_string(), row.auroc, row.ap, row.acc);
    }
    report.robustness = Some(rows);
    write_report(&report, &args.out)?;

    let mut manifest = RunManifest::new("sweep", &config);
    manifest.input(&model)?;
    manifest.input(&args.input)?;
    if let Some(flow) = &args.flow {
        manifest.input(flow)?;
    }
    manifest.output(&args.out);
    manifest.write_beside(&args.out)?;
    Ok(())
}
