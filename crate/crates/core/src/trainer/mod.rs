//! Flow training.
//!
//! The objective pushes natural features up the flow's density and generated
//! ones down (shaping), and rewards latent-space agreement between a natural
//! feature and its transformed twin while penalizing it for generated ones
//! (consistency):
//!
//! ```text
//! shaping     = -mean_n log p(v) + mean_g max(log p(v), floor)
//! consistency = -mean_n cos(f(v), f(T(v))) + mean_g cos(f(v), f(T(v)))
//! total       = w_shape * shaping + w_cons * consistency
//! ```
//!
//! Gradients are written out by hand and reduced over fixed-size chunks in a
//! fixed order, so results do not depend on the worker count.

mod data;
mod optim;
mod score;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{ConvError, Result};
use crate::flow::{standard_normal_log_density, FlowConfig, FlowModel};
use crate::parallel::Workers;

pub use self::data::{TrainData, TrainSample};
pub use self::optim::{adamw_step, OptimizerState};
pub use self::score::{calibrate, fconv_score, ScoreWeights};
pub use self::train::{train, EpochRecord, TrainReport};

/// Pairs per work unit in the gradient reduction.
const CHUNK: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// `(w_shape, w_cons)`.
    pub loss_weights: (f64, f64),
    /// Lower clamp on generated log-probabilities; `None` means `-4 * D`.
    pub logp_floor: Option<f64>,
    pub seed: u64,
    /// Share of samples per class held out for validation.
    pub val_fraction: f64,
    pub jobs: usize,
    pub flow: FlowConfig,
    pub score_weights: ScoreWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 0.01,
            epsilon: 1e-8,
            batch_size: 128,
            epochs: 10,
            loss_weights: (1.0, 1.0),
            logp_floor: None,
            seed: 0,
            val_fraction: 0.1,
            jobs: 1,
            flow: FlowConfig::default(),
            score_weights: ScoreWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ConvError::InvalidInput(m.into()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        let (ws, wc) = self.loss_weights;
        if !(ws.is_finite() && wc.is_finite() && ws >= 0.0 && wc >= 0.0) {
            return bad("loss weights must be finite and non-negative");
        }
        if matches!(self.logp_floor, Some(f) if !f.is_finite()) {
            return bad("logp_floor must be finite");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        self.score_weights.validate()
    }

    pub fn floor_for(&self, dim: usize) -> f64 {
        self.logp_floor.unwrap_or(-4.0 * dim as f64)
    }
}

/// Paired features: row `i` of `natural_t` is a transformed view of the same
/// image as row `i` of `natural`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainBatch {
    pub natural: Vec<Vec<f64>>,
    pub natural_t: Vec<Vec<f64>>,
    pub generated: Vec<Vec<f64>>,
    pub generated_t: Vec<Vec<f64>>,
}

impl TrainBatch {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.natural.len() != self.natural_t.len() || self.generated.len() != self.generated_t.len() {
            return Err(ConvError::InvalidInput("unpaired rows in batch".into()));
        }
        if self.natural.is_empty() || self.generated.is_empty() {
            return Err(ConvError::InvalidInput(
                "batch needs natural and generated pairs".into(),
            ));
        }
        let rows = self
            .natural
            .iter()
            .chain(&self.natural_t)
            .chain(&self.generated)
            .chain(&self.generated_t);
        for row in rows {
            if row.len() != dim {
                return Err(ConvError::InvalidInput(format!(
                    "batch row has dimension {}, flow expects {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ConvError::InvalidInput("batch contains non-finite values".into()));
            }
        }
        Ok(())
    }

    fn items(&self) -> Items<'_> {
        Items {
            natural: self
                .natural
                .iter()
                .zip(&self.natural_t)
                .map(|(a, b)| (a.as_slice(), b.as_slice()))
                .collect(),
            generated: self
                .generated
                .iter()
                .zip(&self.generated_t)
                .map(|(a, b)| (a.as_slice(), b.as_slice()))
                .collect(),
        }
    }
}

/// Borrowed view of a batch.
pub(crate) struct Items<'a> {
    pub natural: Vec<(&'a [f64], &'a [f64])>,
    pub generated: Vec<(&'a [f64], &'a [f64])>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub shaping: f64,
    pub consistency: f64,
}

pub fn loss(flow: &FlowModel, batch: &TrainBatch, config: &TrainConfig) -> Result<LossValue> {
    batch.validate(flow.dim())?;
    evaluate(flow, &batch.items(), config, false, &Workers::new(config.jobs)?).map(|r| r.0)
}

/// Loss and its gradient with respect to every flow parameter.
pub fn grad(flow: &FlowModel, batch: &TrainBatch, config: &TrainConfig) -> Result<(LossValue, Vec<f64>)> {
    batch.validate(flow.dim())?;
    let (value, g) = evaluate(flow, &batch.items(), config, true, &Workers::new(config.jobs)?)?;
    Ok((value, g.expect("gradient requested")))
}

struct Partial {
    shaping: f64,
    consistency: f64,
    grad: Option<Vec<f64>>,
}

/// `d cos(a, b) / d a`.
fn cosine_grad(a: &[f64], b: &[f64], cos: f64, na: f64, nb: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| y / (na * nb) - cos * x / (na * na))
        .collect()
}

fn pair_term(
    flow: &FlowModel,
    v: &[f64],
    v_t: &[f64],
    generated: bool,
    coef: (f64, f64),
    floor: f64,
    grad: Option<&mut Vec<f64>>,
) -> Result<(f64, f64)> {
    let (z, log_det, cache) = flow.forward_cached(v)?;
    let (z_t, _, cache_t) = flow.forward_cached(v_t)?;
    let log_p = standard_normal_log_density(&z) + log_det;
    let clamped = generated && log_p <= floor;
    let shaping_value = if clamped { floor } else { log_p };

    // Identical codes have cosine 1 at a maximum, so zero gradient; this also
    // covers a zero code paired with itself.
    let identical = z == z_t;
    let na = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = z_t.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !identical && (na == 0.0 || nb == 0.0) {
        return Err(ConvError::numeric("consistency loss", "latent code is the zero vector"));
    }
    let cos = if identical {
        1.0
    } else {
        z.iter().zip(&z_t).map(|(a, b)| a * b).sum::<f64>() / (na * nb)
    };

    let (c_shape, c_cons) = coef;
    if let Some(g) = grad {
        let c_p = if clamped { 0.0 } else { c_shape };
        if identical || c_cons == 0.0 {
            let dz: Vec<f64> = z.iter().map(|zi| -c_p * zi).collect();
            flow.backward(&cache, &dz, c_p, g);
        } else {
            let dcos = cosine_grad(&z, &z_t, cos, na, nb);
            let dz: Vec<f64> = z.iter().zip(&dcos).map(|(zi, di)| -c_p * zi + c_cons * di).collect();
            flow.backward(&cache, &dz, c_p, g);
            let dz_t: Vec<f64> = cosine_grad(&z_t, &z, cos, nb, na).iter().map(|d| c_cons * d).collect();
            flow.backward(&cache_t, &dz_t, 0.0, g);
        }
    }
    Ok((shaping_value, cos))
}

pub(crate) fn evaluate(
    flow: &FlowModel,
    items: &Items<'_>,
    config: &TrainConfig,
    want_grad: bool,
    workers: &Workers,
) -> Result<(LossValue, Option<Vec<f64>>)> {
    let (ws, wc) = config.loss_weights;
    let floor = config.floor_for(flow.dim());
    let bn = items.natural.len() as f64;
    let bg = items.generated.len() as f64;
    let all: Vec<((&[f64], &[f64]), bool)> = items
        .natural
        .iter()
        .map(|&p| (p, false))
        .chain(items.generated.iter().map(|&p| (p, true)))
        .collect();
    let chunks = all.len().div_ceil(CHUNK);
    let partials = workers.map(chunks, |c| -> Result<Partial> {
        let mut grad = want_grad.then(|| vec![0.0; flow.param_count()]);
        let (mut shaping, mut consistency) = (0.0, 0.0);
        for &((v, v_t), generated) in &all[c * CHUNK..((c + 1) * CHUNK).min(all.len())] {
            let sign = if generated { 1.0 / bg } else { -1.0 / bn };
            let (s, cos) = pair_term(flow, v, v_t, generated, (ws * sign, wc * sign), floor, grad.as_mut())?;
            shaping += sign * s;
            consistency += sign * cos;
        }
        Ok(Partial {
            shaping,
            consistency,
            grad,
        })
    });
    let mut shaping = 0.0;
    let mut consistency = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; flow.param_count()]);
    for p in partials {
        let p = p?;
        shaping += p.shaping;
        consistency += p.consistency;
        if let (Some(acc), Some(g)) = (grad.as_mut(), p.grad) {
            acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
    }
    if !shaping.is_finite() {
        return Err(ConvError::numeric("shaping loss", "non-finite value"));
    }
    if !consistency.is_finite() {
        return Err(ConvError::numeric("consistency loss", "non-finite value"));
    }
    if let Some(g) = &grad {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(ConvError::numeric("loss gradient", "non-finite value"));
        }
    }
    let value = LossValue {
        total: ws * shaping + wc * consistency,
        shaping,
        consistency,
    };
    Ok((value, grad))
}
