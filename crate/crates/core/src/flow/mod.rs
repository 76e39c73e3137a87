//! A RealNVP-style normalizing flow over feature space.
//!
//! Two affine coupling blocks with complementary masks. Block `k` copies the
//! coordinates where its mask is set and maps the rest as
//! `z_b = v_b * exp(s(v_a)) + t(v_a)`, so the Jacobian is triangular and
//! `log|det| = sum s(v_a)`. Under a standard-normal prior,
//! `log p(v) = log N(f(v); 0, I) + log|det df/dv|`.
//!
//! All parameters live in one flat `f64` buffer so the trainer and the
//! optimizer can treat them as a single vector.

mod file;
mod mlp;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConvError, Result};

pub use self::file::{load_flow, read_flow, save_flow, write_flow, FLOW_MAGIC, FLOW_VERSION};
use self::mlp::{Mlp, MlpCache};

/// `ln(2 pi)`
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Width of both hidden layers in every internal net.
    pub hidden: usize,
    /// Bound on `|s|`; the scale head is squashed as `s_max * tanh(raw / s_max)`.
    pub s_max: f64,
    /// Gain of the uniform init on hidden layers, relative to `1/sqrt(fan_in)`.
    pub init_scale: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            hidden: 512,
            s_max: 3.0,
            init_scale: 1.0,
        }
    }
}

/// Median and interquartile range of natural-set log-probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub median: f64,
    pub iqr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingBlock {
    mask: Vec<bool>,
    pass: Vec<usize>,
    act: Vec<usize>,
    scale_net: Mlp,
    translate_net: Mlp,
}

impl CouplingBlock {
    /// `true` where the block copies the coordinate through unchanged.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    dim: usize,
    hidden: usize,
    s_max: f64,
    blocks: [CouplingBlock; 2],
    params: Vec<f64>,
    calibration: Option<Calibration>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogProbResult {
    pub z: Vec<f64>,
    pub log_det: f64,
    pub log_prob: f64,
}

#[derive(Clone, Debug, Default)]
struct BlockCache {
    a: Vec<f64>,
    b: Vec<f64>,
    s: Vec<f64>,
    exp_s: Vec<f64>,
    scale: MlpCache,
    translate: MlpCache,
}

/// Intermediate values from [`FlowModel::forward_cached`], consumed by the backward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    blocks: [BlockCache; 2],
}

/// `log N(z; 0, I)`.
pub fn standard_normal_log_density(z: &[f64]) -> f64 {
    -0.5 * z.len() as f64 * LN_2PI - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
}

fn check_finite(values: &[f64], context: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ConvError::numeric(context, "non-finite value"))
    }
}

impl FlowModel {
    /// Identity-initialized flow: hidden layers random, scale and translate heads zero.
    pub fn new(dim: usize, config: &FlowConfig, seed: u64) -> Result<Self> {
        let mut flow = Self::zeroed(dim, config.hidden, config.s_max)?;
        let mut rng = crate::seed::rng(seed);
        flow.init_nets(&mut rng, config.init_scale, false);
        Ok(flow)
    }

    /// Every parameter, heads included, drawn at random. Not the identity.
    pub fn random(dim: usize, config: &FlowConfig, seed: u64) -> Result<Self> {
        let mut flow = Self::zeroed(dim, config.hidden, config.s_max)?;
        let mut rng = crate::seed::rng(seed);
        flow.init_nets(&mut rng, config.init_scale, true);
        Ok(flow)
    }

    /// All parameters zero.
    pub fn zeroed(dim: usize, hidden: usize, s_max: f64) -> Result<Self> {
        if dim < 2 {
            return Err(ConvError::InvalidInput("flow dimension must be at least 2".into()));
        }
        if hidden == 0 {
            return Err(ConvError::InvalidInput("hidden width must be positive".into()));
        }
        if !(s_max.is_finite() && s_max > 0.0) {
            return Err(ConvError::InvalidInput("s_max must be positive".into()));
        }
        let half = dim / 2;
        let first: Vec<bool> = (0..dim).map(|i| i < half).collect();
        let second: Vec<bool> = first.iter().map(|m| !m).collect();
        let mut offset = 0;
        let mut block = |mask: Vec<bool>| {
            let pass: Vec<usize> = (0..dim).filter(|&i| mask[i]).collect();
            let act: Vec<usize> = (0..dim).filter(|&i| !mask[i]).collect();
            let (scale_net, next) = Mlp::allocate(offset, pass.len(), hidden, act.len());
            let (translate_net, next) = Mlp::allocate(next, pass.len(), hidden, act.len());
            offset = next;
            CouplingBlock {
                mask,
                pass,
                act,
                scale_net,
                translate_net,
            }
        };
        let blocks = [block(first), block(second)];
        Ok(FlowModel {
            dim,
            hidden,
            s_max,
            blocks,
            params: vec![0.0; offset],
            calibration: None,
        })
    }

    fn init_nets<R: Rng>(&mut self, rng: &mut R, scale: f64, randomize_heads: bool) {
        for block in &self.blocks {
            block.scale_net.init(&mut self.params, rng, scale, randomize_heads);
            block.translate_net.init(&mut self.params, rng, scale, randomize_heads);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn blocks(&self) -> &[CouplingBlock; 2] {
        &self.blocks
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(ConvError::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Parameter index range of block `block`'s scale (`translate == false`) or translate net.
    pub fn net_param_range(&self, block: usize, translate: bool) -> std::ops::Range<usize> {
        let b = &self.blocks[block];
        if translate {
            b.translate_net.param_range()
        } else {
            b.scale_net.param_range()
        }
    }

    /// Index of the bias of output `unit` of a net's final layer.
    pub fn head_bias_index(&self, block: usize, translate: bool, unit: usize) -> usize {
        let b = &self.blocks[block];
        let net = if translate { &b.translate_net } else { &b.scale_net };
        net.layers[2].b + unit
    }

    pub fn calibration(&self) -> Option<Calibration> {
        self.calibration
    }

    pub fn set_calibration(&mut self, calibration: Option<Calibration>) {
        self.calibration = calibration;
    }

    fn check_input(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(ConvError::InvalidInput(format!(
                "flow expects dimension {}, got {}",
                self.dim,
                v.len()
            )));
        }
        check_finite(v, "flow input")
    }

    fn squash(&self, raw: f64) -> f64 {
        self.s_max * (raw / self.s_max).tanh()
    }

    pub fn forward(&self, v: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (z, log_det, _) = self.forward_cached(v)?;
        Ok((z, log_det))
    }

    /// Forward pass keeping what the backward pass needs.
    pub fn forward_cached(&self, v: &[f64]) -> Result<(Vec<f64>, f64, ForwardCache)> {
        self.check_input(v)?;
        let mut x = v.to_vec();
        let mut log_det = 0.0;
        let mut cache = ForwardCache::default();
        for (k, (block, bc)) in self.blocks.iter().zip(cache.blocks.iter_mut()).enumerate() {
            bc.a = block.pass.iter().map(|&i| x[i]).collect();
            bc.b = block.act.iter().map(|&i| x[i]).collect();
            let raw = block.scale_net.forward(&self.params, &bc.a, &mut bc.scale);
            let t = block.translate_net.forward(&self.params, &bc.a, &mut bc.translate);
            bc.s = raw.iter().map(|&r| self.squash(r)).collect();
            bc.exp_s = bc.s.iter().map(|s| s.exp()).collect();
            for (j, &i) in block.act.iter().enumerate() {
                x[i] = bc.b[j] * bc.exp_s[j] + t[j];
            }
            log_det += bc.s.iter().sum::<f64>();
            check_finite(&x, &format!("coupling block {k}"))?;
        }
        if !log_det.is_finite() {
            return Err(ConvError::numeric("flow log-determinant", "non-finite value"));
        }
        Ok((x, log_det, cache))
    }

    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_input(z)?;
        let mut x = z.to_vec();
        for (k, block) in self.blocks.iter().enumerate().rev() {
            let a: Vec<f64> = block.pass.iter().map(|&i| x[i]).collect();
            let raw = block.scale_net.eval(&self.params, &a);
            let t = block.translate_net.eval(&self.params, &a);
            for (j, &i) in block.act.iter().enumerate() {
                x[i] = (x[i] - t[j]) * (-self.squash(raw[j])).exp();
            }
            check_finite(&x, &format!("inverse of coupling block {k}"))?;
        }
        Ok(x)
    }

    pub fn log_prob(&self, v: &[f64]) -> Result<LogProbResult> {
        let (z, log_det) = self.forward(v)?;
        let log_prob = standard_normal_log_density(&z) + log_det;
        Ok(LogProbResult { z, log_det, log_prob })
    }

    /// Backpropagate `dL/dz` and `dL/dlog_det` through a cached forward pass,
    /// adding parameter gradients into `grad`. Returns `dL/dv`.
    pub fn backward(&self, cache: &ForwardCache, dz: &[f64], d_log_det: f64, grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.params.len());
        let mut dx = dz.to_vec();
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let n = block.act.len();
            let mut d_raw = Vec::with_capacity(n);
            let mut d_t = Vec::with_capacity(n);
            let mut d_b = Vec::with_capacity(n);
            for (j, &i) in block.act.iter().enumerate() {
                let dy = dx[i];
                let ds = dy * bc.b[j] * bc.exp_s[j] + d_log_det;
                let ratio = bc.s[j] / self.s_max;
                d_raw.push(ds * (1.0 - ratio * ratio));
                d_t.push(dy);
                d_b.push(dy * bc.exp_s[j]);
            }
            let da_s = block.scale_net.backward(&self.params, &bc.scale, &d_raw, grad);
            let da_t = block.translate_net.backward(&self.params, &bc.translate, &d_t, grad);
            for (j, &i) in block.pass.iter().enumerate() {
                dx[i] += da_s[j] + da_t[j];
            }
            for (j, &i) in block.act.iter().enumerate() {
                dx[i] = d_b[j];
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FlowConfig {
        FlowConfig {
            hidden: 8,
            ..FlowConfig::default()
        }
    }

    #[test]
    fn identity_at_init() {
        let flow = FlowModel::new(5, &small(), 1).unwrap();
        let v = [0.3, -1.0, 2.5, 0.0, 7.0];
        let (z, ld) = flow.forward(&v).unwrap();
        assert_eq!(z, v);
        assert_eq!(ld, 0.0);
        assert_eq!(flow.inverse(&v).unwrap(), v);
    }

    #[test]
    fn masks_are_complementary() {
        for d in [2, 3, 8, 9] {
            let flow = FlowModel::new(d, &small(), 0).unwrap();
            let [b0, b1] = flow.blocks();
            for i in 0..d {
                assert_ne!(b0.mask()[i], b1.mask()[i]);
            }
            assert!(b0.mask().iter().any(|&m| m) && b0.mask().iter().any(|&m| !m));
        }
    }

    #[test]
    fn constant_scale_closed_form() {
        // Block 0 passes coordinate 0 and scales coordinate 1 by e^0.5.
        let mut flow = FlowModel::zeroed(2, 4, 3.0).unwrap();
        let raw = 3.0 * (0.5f64 / 3.0).atanh();
        let idx = flow.head_bias_index(0, false, 0);
        flow.params_mut()[idx] = raw;
        let (z, ld) = flow.forward(&[1.5, 2.0]).unwrap();
        assert_eq!(z[0], 1.5);
        assert!((z[1] - 2.0 * 0.5f64.exp()).abs() < 1e-12);
        assert!((ld - 0.5).abs() < 1e-12);
        let v = flow.inverse(&z).unwrap();
        assert!((v[1] - z[1] * (-0.5f64).exp()).abs() < 1e-12);
        assert!((v[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identity_log_prob_is_standard_normal() {
        let flow = FlowModel::new(2, &small(), 0).unwrap();
        let r = flow.log_prob(&[0.0, 0.0]).unwrap();
        assert!((r.log_prob + 1.837877).abs() < 1e-6);
        let r = flow.log_prob(&[1.0, 0.0]).unwrap();
        assert!((r.log_prob + 2.337877).abs() < 1e-6);
        assert_eq!(r.log_prob, standard_normal_log_density(&r.z) + r.log_det);
    }

    #[test]
    fn scale_is_bounded() {
        let mut flow = FlowModel::random(4, &small(), 3).unwrap();
        for p in flow.params_mut() {
            *p *= 50.0;
        }
        let (_, ld) = flow.forward(&[10.0, -10.0, 5.0, 1.0]).unwrap();
        assert!(ld.abs() <= 2.0 * 2.0 * 3.0 + 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let flow = FlowModel::new(3, &small(), 0).unwrap();
        assert!(flow.forward(&[1.0, 2.0]).is_err());
        assert!(flow.forward(&[1.0, f64::NAN, 0.0]).is_err());
        assert!(FlowModel::new(1, &small(), 0).is_err());
    }

    #[test]
    fn overflow_reports_block() {
        let mut flow = FlowModel::random(2, &small(), 0).unwrap();
        let idx = flow.head_bias_index(0, false, 0);
        flow.params_mut()[idx] = 1e6;
        let err = flow.forward(&[1.0, 1e308]).unwrap_err();
        assert!(err.is_numeric());
        assert!(err.to_string().contains("coupling block"), "{err}");
    }
}
