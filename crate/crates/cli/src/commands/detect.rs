use anyhow::Context;
use conv_core::detector::verdict;
use conv_core::embeddings::load_feature_file;
use conv_core::eval::{ConvScorer, FconvScorer, Scorer};
use conv_core::parallel::Workers;
use conv_core::trainer::fconv_score;
use conv_core::{
    select_threshold, stored_consistency_score, DetectorConfig, Embedder, FeatureStore, FlowModel, Label, Threshold,
};

use super::{for_each_image, load_backend, load_calibrated_flow, usage};
use crate::args::DetectArgs;
use crate::config::ToolkitConfig;
use crate::inputs::{scan_images, write_scores, ScoreRow};
use crate::manifest::RunManifest;

pub fn run(args: DetectArgs, mut config: ToolkitConfig) -> anyhow::Result<()> {
    config.apply_detector_args(&args.detector);
    let detector = config.detector_config();
    detector.validate()?;
    let workers = Workers::new(config.jobs)?;
    let mut manifest = RunManifest::new("detect", &config);

    let mut rows = if args.input.is_file() {
        score_feature_file(&args, &config, &detector, &workers)?
    } else {
        let model = config.model_path(args.model.model.as_ref()).map_err(|e| usage(e.to_string()))?;
        manifest.input(&model)?;
        let backend = load_backend(&model)?;
        let flow = args
            .flow
            .as_deref()
            .map(|p| load_calibrated_flow(p, Some(backend.output_dim())))
            .transpose()?;
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
        let entries = scan_images(&args.input)?;
        let scores = for_each_image(&entries, &backend, args.model.random_crop, detector.seed, &workers, |i, img| {
            let id = &entries[i].sample_id;
            scorer.score(img, id).with_context(|| format!("scoring `{id}`"))
        })?;
        entries
            .iter()
            .zip(scores)
            .map(|(e, score)| ScoreRow {
                sample_id: e.sample_id.clone(),
                label: e.label,
                score,
                verdict: None,
                source_id: Some(e.source_id.clone()),
            })
            .collect()
    };

    let alpha = threshold(&rows, detector.threshold)?;
    for row in &mut rows {
        row.verdict = Some(verdict(row.score, alpha));
    }
    write_scores(&args.out, &rows)?;
    let flagged = rows.iter().filter(|r| r.verdict == Some(conv_core::Verdict::Generated)).count();
    println!(
        "scored {} samples, {flagged} flagged generated at threshold {alpha}; wrote {}",
        rows.len(),
        args.out.display()
    );

    manifest.input(&args.input)?;
    if let Some(flow) = &args.flow {
        manifest.input(flow)?;
    }
    manifest.output(&args.out);
    manifest.write_beside(&args.out)?;
    Ok(())
}

fn score_feature_file(
    args: &DetectArgs,
    config: &ToolkitConfig,
    detector: &DetectorConfig,
    workers: &Workers,
) -> anyhow::Result<Vec<ScoreRow>> {
    let path = args.input.as_path();
    let store = FeatureStore::new(load_feature_file(path)?).with_context(|| format!("indexing {}", path.display()))?;
    let flow = args
        .flow
        .as_deref()
        .map(|p| load_calibrated_flow(p, Some(store.output_dim())))
        .transpose()?;
    let originals: Vec<_> = store.set().originals().collect();
    let scores = workers.map(originals.len(), |i| {
        let id = originals[i].sample_id.as_str();
        match &flow {
            Some(flow) => stored_fconv(&store, flow, id, detector, config),
            None => Ok(stored_consistency_score(&store, id, detector)?.score),
        }
        .with_context(|| format!("{}: scoring `{id}`", path.display()))
    });
    originals
        .iter()
        .zip(scores)
        .map(|(row, score)| {
            Ok(ScoreRow {
                sample_id: row.sample_id.clone(),
                label: Some(row.label),
                score: score?,
                verdict: None,
                source_id: Some(row.source_id.clone()),
            })
        })
        .collect()
}

fn stored_fconv(
    store: &FeatureStore,
    flow: &FlowModel,
    id: &str,
    detector: &DetectorConfig,
    config: &ToolkitConfig,
) -> anyhow::Result<f64> {
    let available = store.view_count(id);
    if available < detector.rounds {
        anyhow::bail!("sample has {available} stored views, {} rounds requested", detector.rounds);
    }
    let v = store.lookup(id)?.to_f64();
    let views = (1..=detector.rounds as u32)
        .map(|k| store.lookup_view(id, k).map(|f| f.to_f64()))
        .collect::<conv_core::Result<Vec<_>>>()?;
    Ok(fconv_score(flow, &v, &views, config.trainer.score_weights)?)
}

fn threshold(rows: &[ScoreRow], threshold: Threshold) -> anyhow::Result<f64> {
    match threshold {
        Threshold::Fixed(a) => Ok(a),
        Threshold::Auto => {
            let mut natural = Vec::new();
            let mut generated = Vec::new();
            for row in rows {
                match row.label {
                    Some(Label::Natural) => natural.push(row.score),
                    Some(Label::Generated) => generated.push(row.score),
                    None => {
                        return Err(usage(format!(
                            "--threshold auto needs labels, but `{}` has none; pass a number",
                            row.sample_id
                        )))
                    }
                }
            }
            if natural.is_empty() || generated.is_empty() {
                return Err(usage("--threshold auto needs both natural and generated samples; pass a number"));
            }
            Ok(select_threshold(&natural, &generated)?)
        }
    }
}

