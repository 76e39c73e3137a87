use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{ConvError, Result};

/// AdamW moment estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(param_count: usize) -> Self {
        OptimizerState {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
        }
    }
}

/// One AdamW update with bias-corrected moments and decoupled weight decay:
/// `theta -= lr * m_hat / (sqrt(v_hat) + eps) + lr * wd * theta`.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.first_moment.len() != n || state.second_moment.len() != n {
        return Err(ConvError::InvalidInput(
            "optimizer shapes do not match the parameters".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let wd = config.weight_decay;
    for i in 0..n {
        let g = grads[i];
        let m = b1 * state.first_moment[i] + (1.0 - b1) * g;
        let v = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / c1;
        let v_hat = v / c2;
        let theta = params[i];
        params[i] = theta - lr * m_hat / (v_hat.sqrt() + config.epsilon) - lr * wd * theta;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_by_hand() {
        let cfg = TrainConfig::default();
        let mut p = [1.0];
        let mut s = OptimizerState::new(1);
        adamw_step(&mut p, &[1.0], &mut s, &cfg).unwrap();
        let expected = 1.0 - 1e-5 * (1.0 / (1.0 + 1e-8)) - 1e-5 * 0.01;
        assert_eq!(p[0], expected);
        assert!((p[0] - 0.999_989_90).abs() < 1e-10);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn two_steps_unrolled() {
        let cfg = TrainConfig::default();
        let (lr, wd, eps) = (1e-5, 0.01, 1e-8);

        // g = 1 twice: m = 0.1, 0.19; v = 0.01, 0.0199. Both bias corrections give 1.
        let mut p = [1.0];
        let mut s = OptimizerState::new(1);
        adamw_step(&mut p, &[1.0], &mut s, &cfg).unwrap();
        let theta1 = p[0];
        adamw_step(&mut p, &[1.0], &mut s, &cfg).unwrap();
        let m_hat = 0.19 / (1.0 - 0.81);
        let v_hat = 0.0199 / (1.0 - 0.9801);
        let expected = theta1 - lr * m_hat / (f64::sqrt(v_hat) + eps) - lr * wd * theta1;
        assert!((p[0] - expected).abs() < 1e-15);
        assert_eq!(s.step, 2);

        // g = 1 then -1: m = 0.1, -0.01 -> m_hat = -0.01/0.19; v_hat = 1.
        let mut p = [1.0];
        let mut s = OptimizerState::new(1);
        adamw_step(&mut p, &[1.0], &mut s, &cfg).unwrap();
        let theta1 = p[0];
        adamw_step(&mut p, &[-1.0], &mut s, &cfg).unwrap();
        let m_hat = -0.01 / 0.19;
        let expected = theta1 - lr * m_hat / (1.0 + eps) - lr * wd * theta1;
        assert!((p[0] - expected).abs() < 1e-15);
        assert!(p[0] > theta1 - lr * wd * theta1);
    }

    #[test]
    fn zero_gradient_zero_decay_is_a_no_op() {
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut p = [0.5, -2.0, 3.0];
        let mut s = OptimizerState::new(3);
        for _ in 0..5 {
            adamw_step(&mut p, &[0.0; 3], &mut s, &cfg).unwrap();
        }
        assert_eq!(p, [0.5, -2.0, 3.0]);
    }

    #[test]
    fn shape_mismatch() {
        let mut s = OptimizerState::new(2);
        assert!(adamw_step(&mut [0.0; 2], &[0.0; 3], &mut s, &TrainConfig::default()).is_err());
    }
}
