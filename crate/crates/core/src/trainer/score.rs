use serde::{Deserialize, Serialize};

use crate::detector::{cosine, score_from_similarities, Aggregation};
use crate::error::{ConvError, Result};
use crate::flow::{Calibration, FlowModel};

/// Fusion weights `(w_c, w_p)` of the combined score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreWeights {
    pub consistency: f64,
    pub likelihood: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            consistency: 1.0,
            likelihood: 1.0,
        }
    }
}

impl ScoreWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.consistency.is_finite() && self.likelihood.is_finite())
            || self.consistency < 0.0
            || self.likelihood < 0.0
        {
            return Err(ConvError::InvalidInput(
                "score weights must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Type-7 quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and IQR of the natural-set log-probabilities, stored on the flow.
/// A zero IQR falls back to 1 so the logistic term stays defined.
pub fn calibrate<'a, I>(flow: &mut FlowModel, natural: I) -> Result<Calibration>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut logps = natural
        .into_iter()
        .map(|v| flow.log_prob(v).map(|r| r.log_prob))
        .collect::<Result<Vec<_>>>()?;
    if logps.is_empty() {
        return Err(ConvError::InvalidInput("calibration needs natural samples".into()));
    }
    logps.sort_by(f64::total_cmp);
    let median = quantile(&logps, 0.5);
    let mut iqr = quantile(&logps, 0.75) - quantile(&logps, 0.25);
    if iqr <= 0.0 {
        log::warn!("natural log-probabilities have zero IQR; using 1");
        iqr = 1.0;
    }
    let calibration = Calibration { median, iqr };
    flow.set_calibration(Some(calibration));
    Ok(calibration)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `w_c * (1 - mean cos(f(v), f(v_t))) + w_p * logistic(-(log p(v) - median) / iqr)`.
/// Higher means more likely generated.
pub fn fconv_score(flow: &FlowModel, v: &[f64], transformed: &[Vec<f64>], weights: ScoreWeights) -> Result<f64> {
    let Calibration { median, iqr } = flow.calibration().ok_or(ConvError::CalibrationMissing)?;
    let (z, log_det) = flow.forward(v)?;
    let log_p = crate::flow::standard_normal_log_density(&z) + log_det;
    let consistency = if weights.consistency == 0.0 {
        0.0
    } else {
        let sims = transformed
            .iter()
            .map(|t| {
                let (z_t, _) = flow.forward(t)?;
                cosine(&z, &z_t)
            })
            .collect::<Result<Vec<_>>>()?;
        score_from_similarities("", sims, Aggregation::Mean)?.score
    };
    let likelihood = if weights.likelihood == 0.0 {
        0.0
    } else {
        logistic(-(log_p - median) / iqr)
    };
    Ok(weights.consistency * consistency + weights.likelihood * likelihood)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowConfig;

    fn flow() -> FlowModel {
        FlowModel::random(
            3,
            &FlowConfig {
                hidden: 5,
                ..FlowConfig::default()
            },
            4,
        )
        .unwrap()
    }

    #[test]
    fn uncalibrated_is_an_error() {
        let err = fconv_score(&flow(), &[1.0, 0.0, 0.0], &[], ScoreWeights::default()).unwrap_err();
        assert!(matches!(err, ConvError::CalibrationMissing));
    }

    #[test]
    fn median_point_scores_half() {
        let mut f = flow();
        let rows = [[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [2.0, 0.0, 0.0]];
        calibrate(&mut f, rows.iter().map(|r| r.as_slice())).unwrap();
        let logps: Vec<f64> = rows.iter().map(|r| f.log_prob(r).unwrap().log_prob).collect();
        let mut sorted = logps.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = rows[logps.iter().position(|&l| l == sorted[1]).unwrap()];
        let s = fconv_score(&f, &mid, &[mid.to_vec()], ScoreWeights::default()).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_likelihood_weight_is_latent_consistency() {
        let mut f = flow();
        calibrate(&mut f, [[0.0, 1.0, 2.0].as_slice()]).unwrap();
        let v = [0.4, -0.3, 1.2];
        let views = vec![vec![0.5, -0.2, 1.0], vec![-1.0, 0.3, 0.2]];
        let w = ScoreWeights {
            consistency: 1.0,
            likelihood: 0.0,
        };
        let z = f.forward(&v).unwrap().0;
        let sims: Vec<f64> = views
            .iter()
            .map(|t| cosine(&z, &f.forward(t).unwrap().0).unwrap())
            .collect();
        let expected = score_from_similarities("", sims, Aggregation::Mean).unwrap().score;
        assert_eq!(fconv_score(&f, &v, &views, w).unwrap(), expected);
    }

    #[test]
    fn quantiles() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&d, 0.5), 2.5);
        assert_eq!(quantile(&d, 0.25), 1.75);
        assert_eq!(quantile(&d, 0.75), 3.25);
    }
}
