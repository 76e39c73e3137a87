use conv_core::embeddings::save_feature_file;
use conv_core::parallel::Workers;
use conv_core::transforms::{apply_transform, draw_transform};
use conv_core::{Embedder, FeatureRow, FeatureSet, Label};

use super::{for_each_image, load_backend, usage};
use crate::args::ExtractArgs;
use crate::config::ToolkitConfig;
use crate::inputs::scan_images;
use crate::manifest::RunManifest;

pub fn run(args: ExtractArgs, mut config: ToolkitConfig) -> anyhow::Result<()> {
    config.apply_detector_args(&args.detector);
    let detector = config.detector_config();
    detector.validate()?;
    let model = config.model_path(args.model.model.as_ref()).map_err(|e| usage(e.to_string()))?;
    let backend = load_backend(&model)?.with_normalization(!args.no_normalize);
    let entries = scan_images(&args.input)?;
    let labels = entries
        .iter()
        .map(|e| {
            args.label.map(Label::from).or(e.label).ok_or_else(|| {
                usage(format!(
                    "cannot tell the label of `{}` from its path; pass --label",
                    e.sample_id
                ))
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let workers = Workers::new(config.jobs)?;
    let embedded = for_each_image(&entries, &backend, args.model.random_crop, detector.seed, &workers, |_, img| {
        let mut vectors = vec![backend.embed(img)?];
        for view in 1..=args.views {
            let sample = draw_transform(&detector.transform, detector.round_seed(view - 1));
            vectors.push(backend.embed(&apply_transform(img, &sample))?);
        }
        Ok(vectors)
    })?;

    let mut set = FeatureSet::new(backend.backbone_id(), backend.output_dim());
    for ((entry, label), vectors) in entries.iter().zip(labels).zip(embedded) {
        for (view, vector) in vectors.into_iter().enumerate() {
            set.push(FeatureRow {
                vector,
                label,
                source_id: entry.source_id.clone(),
                sample_id: entry.sample_id.clone(),
                view: view as u32,
            })?;
        }
    }
    save_feature_file(&set, &args.out)?;
    println!(
        "wrote {} rows ({} images x {} views, D={}) to {}",
        set.len(),
        entries.len(),
        args.views + 1,
        set.dim(),
        args.out.display()
    );

    let mut manifest = RunManifest::new("extract", &config);
    manifest.input(&model)?;
    manifest.input(&args.input)?;
    manifest.output(&args.out);
    manifest.write_beside(&args.out)?;
    Ok(())
}
