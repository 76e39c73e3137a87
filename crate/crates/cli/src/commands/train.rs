use std::path::PathBuf;

use anyhow::Context;
use conv_core::embeddings::load_feature_file;
use conv_core::flow::save_flow;
use conv_core::trainer::{calibrate, train};
use conv_core::{ConvError, FlowModel, Label, TrainData};

use crate::args::TrainArgs;
use crate::config::ToolkitConfig;
use crate::manifest::RunManifest;

pub fn run(args: TrainArgs, mut config: ToolkitConfig) -> anyhow::Result<()> {
    config.apply_train_args(&args);
    let cfg = &config.trainer;
    cfg.validate()?;

    let mut sets = vec![load_feature_file(&args.features)?];
    if let Some(path) = &args.gen_features {
        sets.push(load_feature_file(path)?);
    }
    let refs: Vec<_> = sets.iter().collect();
    let data = TrainData::from_feature_sets(&refs)?;
    log::info!(
        "training on {} natural and {} generated samples, D={}",
        data.count(Label::Natural),
        data.count(Label::Generated),
        data.dim()
    );

    let mut flow = FlowModel::new(data.dim(), &cfg.flow, cfg.seed)?;
    let report = train(&mut flow, &data, cfg)?;
    let naturals: Vec<&[f64]> = data
        .samples()
        .iter()
        .filter(|s| s.label == Label::Natural)
        .map(|s| s.original.as_slice())
        .collect();
    let calibration = calibrate(&mut flow, naturals)?;
    save_flow(&flow, &args.out)?;

    let history = args.history.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".history.csv");
        PathBuf::from(p)
    });
    std::fs::write(&history, report.history_csv()).with_context(|| format!("writing {}", history.display()))?;

    let last = report.history.last();
    println!(
        "trained {} epochs (best {}), final loss {}, val AUROC {}; calibration median {} IQR {}; wrote {}",
        last.map_or(0, |r| r.epoch),
        report.best_epoch,
        last.map_or(f64::NAN, |r| r.loss),
        last.and_then(|r| r.val_auroc).map_or("n/a".into(), |a| format!("{a:.4}")),
        calibration.median,
        calibration.iqr,
        args.out.display()
    );

    let mut manifest = RunManifest::new("train-flow", &config);
    manifest.input(&args.features)?;
    if let Some(path) = &args.gen_features {
        manifest.input(path)?;
    }
    manifest.output(&args.out);
    manifest.output(&history);
    manifest.write_beside(&args.out)?;

    if let Some(reason) = report.diverged {
        return Err(anyhow::Error::new(ConvError::Numeric {
            context: "training diverged".into(),
            message: reason,
        })
        .context(format!("best checkpoint saved to {}", args.out.display())));
    }
    Ok(())
}
