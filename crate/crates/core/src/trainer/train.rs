use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{adamw_step, evaluate, Items, LossValue, OptimizerState, TrainConfig, TrainData};
use crate::embeddings::Label;
use crate::error::{ConvError, Result};
use crate::eval::auroc_scores;
use crate::flow::FlowModel;
use crate::parallel::Workers;
use crate::seed::{derive_seed, rng};

/// Training state after an epoch. Epoch 0 describes the flow before any update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub loss: f64,
    pub shaping: f64,
    pub consistency: f64,
    /// AUROC of `-log p` on held-out originals, generated positive.
    pub val_auroc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters the flow holds on return.
    pub best_epoch: usize,
    /// Set when training stopped on a non-finite loss or parameter.
    pub diverged: Option<String>,
    pub train_samples: (usize, usize),
    pub val_samples: (usize, usize),
}

impl TrainReport {
    /// History as CSV with a header row.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,steps,loss,shaping,consistency,val_auroc\n");
        for r in &self.history {
            let val = r.val_auroc.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.steps, r.loss, r.shaping, r.consistency, val
            ));
        }
        out
    }
}

struct Split<'a> {
    natural: Vec<(&'a [f64], &'a [f64])>,
    generated: Vec<(&'a [f64], &'a [f64])>,
    val_natural: Vec<&'a [f64]>,
    val_generated: Vec<&'a [f64]>,
    counts: ((usize, usize), (usize, usize)),
}

fn split<'a>(data: &'a TrainData, config: &TrainConfig) -> Split<'a> {
    let mut r = rng(derive_seed(config.seed, u64::MAX));
    let mut out = Split {
        natural: Vec::new(),
        generated: Vec::new(),
        val_natural: Vec::new(),
        val_generated: Vec::new(),
        counts: ((0, 0), (0, 0)),
    };
    for label in [Label::Natural, Label::Generated] {
        let mut idx: Vec<usize> = (0..data.samples().len())
            .filter(|&i| data.samples()[i].label == label)
            .collect();
        idx.shuffle(&mut r);
        let n_val = if idx.len() >= 2 {
            ((idx.len() as f64 * config.val_fraction).round() as usize).min(idx.len() - 1)
        } else {
            0
        };
        let (val, train) = idx.split_at(n_val);
        let mut train = train.to_vec();
        train.sort_unstable();
        let (pairs, val_rows) = match label {
            Label::Natural => (&mut out.natural, &mut out.val_natural),
            Label::Generated => (&mut out.generated, &mut out.val_generated),
        };
        for &i in &train {
            let s = &data.samples()[i];
            pairs.extend(s.views.iter().map(|v| (s.original.as_slice(), v.as_slice())));
        }
        val_rows.extend(val.iter().map(|&i| data.samples()[i].original.as_slice()));
        match label {
            Label::Natural => {
                out.counts.0 .0 = train.len();
                out.counts.1 .0 = val.len();
            }
            Label::Generated => {
                out.counts.0 .1 = train.len();
                out.counts.1 .1 = val.len();
            }
        }
    }
    out
}

fn val_auroc(flow: &FlowModel, natural: &[&[f64]], generated: &[&[f64]]) -> Result<Option<f64>> {
    if natural.is_empty() || generated.is_empty() {
        return Ok(None);
    }
    let score = |rows: &[&[f64]]| -> Result<Vec<f64>> {
        rows.iter().map(|v| flow.log_prob(v).map(|r| -r.log_prob)).collect()
    };
    auroc_scores(&score(natural)?, &score(generated)?).map(Some)
}

fn record(
    flow: &FlowModel,
    split: &Split<'_>,
    config: &TrainConfig,
    workers: &Workers,
    epoch: usize,
    steps: usize,
) -> Result<EpochRecord> {
    let items = Items {
        natural: split.natural.clone(),
        generated: split.generated.clone(),
    };
    let (LossValue { total, shaping, consistency }, _) = evaluate(flow, &items, config, false, workers)?;
    Ok(EpochRecord {
        epoch,
        steps,
        loss: total,
        shaping,
        consistency,
        val_auroc: val_auroc(flow, &split.val_natural, &split.val_generated)?,
    })
}

fn better(candidate: &EpochRecord, best: &EpochRecord) -> bool {
    match (candidate.val_auroc, best.val_auroc) {
        (Some(c), Some(b)) => c > b,
        _ => candidate.loss < best.loss,
    }
}

/// Train `flow` in place. On return the flow holds the best checkpoint: the
/// highest validation AUROC, or the lowest training loss when nothing is held
/// out. A non-finite loss stops training and is reported in `diverged`.
pub fn train(flow: &mut FlowModel, data: &TrainData, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if data.dim() != flow.dim() {
        return Err(ConvError::InvalidInput(format!(
            "training data has dimension {}, flow expects {}",
            data.dim(),
            flow.dim()
        )));
    }
    let split = split(data, config);
    if split.natural.is_empty() || split.generated.is_empty() {
        return Err(ConvError::InvalidInput(
            "training needs natural and generated samples with transformed views".into(),
        ));
    }
    let workers = Workers::new(config.jobs)?;
    let half = config.batch_size / 2;
    let bn = half.min(split.natural.len());
    let bg = (config.batch_size - half).min(split.generated.len());
    let steps = split.natural.len().div_ceil(bn).max(split.generated.len().div_ceil(bg));

    let mut history = vec![record(flow, &split, config, &workers, 0, 0)?];
    let mut best_epoch = 0;
    let mut best_params = flow.params().to_vec();
    let mut state = OptimizerState::new(flow.param_count());
    let mut diverged = None;

    'epochs: for epoch in 1..=config.epochs {
        let mut r = rng(derive_seed(config.seed, epoch as u64));
        let mut nat: Vec<usize> = (0..split.natural.len()).collect();
        let mut gen: Vec<usize> = (0..split.generated.len()).collect();
        nat.shuffle(&mut r);
        gen.shuffle(&mut r);
        for step in 0..steps {
            let items = Items {
                natural: (0..bn).map(|j| split.natural[nat[(step * bn + j) % nat.len()]]).collect(),
                generated: (0..bg).map(|j| split.generated[gen[(step * bg + j) % gen.len()]]).collect(),
            };
            let outcome = evaluate(flow, &items, config, true, &workers).and_then(|(_, g)| {
                let g = g.expect("gradient requested");
                adamw_step(flow.params_mut(), &g, &mut state, config)?;
                if flow.params().iter().all(|p| p.is_finite()) {
                    Ok(())
                } else {
                    Err(ConvError::numeric("optimizer step", "non-finite parameter"))
                }
            });
            if let Err(e) = outcome {
                if !e.is_numeric() {
                    return Err(e);
                }
                diverged = Some(format!("epoch {epoch}, step {step}: {e}"));
                break 'epochs;
            }
        }
        match record(flow, &split, config, &workers, epoch, steps) {
            Ok(rec) => {
                log::info!(
                    "epoch {epoch}: loss {:.6} val_auroc {:?}",
                    rec.loss,
                    rec.val_auroc
                );
                if better(&rec, &history[best_epoch]) {
                    best_epoch = history.len();
                    best_params.copy_from_slice(flow.params());
                }
                history.push(rec);
            }
            Err(e) if e.is_numeric() => {
                diverged = Some(format!("epoch {epoch}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(msg) = &diverged {
        log::warn!("training diverged ({msg}); keeping epoch {best_epoch}");
    }
    flow.set_params(&best_params)?;
    Ok(TrainReport {
        best_epoch: history[best_epoch].epoch,
        history,
        diverged,
        train_samples: split.counts.0,
        val_samples: split.counts.1,
    })
}

#[cfg(test)]
mod tests {
    use super::super::TrainSample;
    use super::*;
    use crate::flow::FlowConfig;
    use rand_distr::{Distribution, StandardNormal};

    fn two_clouds(n: usize, d: usize, seed: u64) -> TrainData {
        let mut r = rng(seed);
        let mut data = TrainData::new(d);
        for i in 0..2 * n {
            let generated = i >= n;
            let shift = if generated { 1.0 / (d as f64).sqrt() } else { 0.0 };
            let original: Vec<f64> = (0..d)
                .map(|_| shift + { let n: f64 = StandardNormal.sample(&mut r); n })
                .collect();
            let view = original
                .iter()
                .map(|x| x + 0.05 * { let n: f64 = StandardNormal.sample(&mut r); n })
                .collect();
            data.push(TrainSample {
                sample_id: format!("s{i:05}"),
                label: if generated { Label::Generated } else { Label::Natural },
                original,
                views: vec![view],
            })
            .unwrap();
        }
        data
    }

    fn config() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 3,
            flow: FlowConfig {
                hidden: 8,
                ..FlowConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_leaves_flow_unchanged() {
        let data = two_clouds(20, 4, 1);
        let cfg = TrainConfig { epochs: 0, ..config() };
        let mut flow = FlowModel::new(4, &cfg.flow, 0).unwrap();
        let before = flow.clone();
        let report = train(&mut flow, &data, &cfg).unwrap();
        assert_eq!(flow, before);
        assert_eq!(report.history.len(), 1);
    }

    #[test]
    fn zero_learning_rate_gives_flat_history() {
        let data = two_clouds(20, 4, 2);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..config()
        };
        let mut flow = FlowModel::new(4, &cfg.flow, 0).unwrap();
        let report = train(&mut flow, &data, &cfg).unwrap();
        let first = report.history[0].loss;
        assert!(report.history.iter().all(|r| r.loss == first));
    }

    #[test]
    fn deterministic_given_seed() {
        let data = two_clouds(30, 4, 3);
        let cfg = config();
        let mut a = FlowModel::new(4, &cfg.flow, 5).unwrap();
        let mut b = a.clone();
        let ra = train(&mut a, &data, &cfg).unwrap();
        let rb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(ra, rb);
    }

    #[test]
    fn training_lowers_the_loss() {
        let data = two_clouds(60, 4, 4);
        let cfg = TrainConfig {
            val_fraction: 0.0,
            epochs: 5,
            ..config()
        };
        let mut flow = FlowModel::new(4, &cfg.flow, 1).unwrap();
        let report = train(&mut flow, &data, &cfg).unwrap();
        let first = report.history[0].loss;
        let best = report.history[report.best_epoch].loss;
        assert!(best < first, "{first} -> {best}");
        assert!(report.history.len() == 6 && report.diverged.is_none());
    }

    #[test]
    fn divergence_keeps_last_good_checkpoint() {
        let data = two_clouds(20, 4, 6);
        let cfg = TrainConfig {
            learning_rate: 1e300,
            weight_decay: 1.0,
            ..config()
        };
        let mut flow = FlowModel::new(4, &cfg.flow, 0).unwrap();
        let before = flow.clone();
        let report = train(&mut flow, &data, &cfg).unwrap();
        assert!(report.diverged.is_some());
        assert!(flow.params().iter().all(|p| p.is_finite()));
        if report.best_epoch == 0 {
            assert_eq!(flow, before);
        }
    }
}
