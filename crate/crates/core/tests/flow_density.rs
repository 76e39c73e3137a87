use conv_core::{FlowConfig, FlowModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Importance-sampling estimate of the integral of exp(log p) over R^8 with a
/// wide Gaussian proposal. A proper density integrates to 1.
#[test]
fn density_integrates_to_one() {
    let d = 8;
    let sigma: f64 = 2.0;
    let flow = FlowModel::random(
        d,
        &FlowConfig {
            hidden: 16,
            init_scale: 0.5,
            ..Default::default()
        },
        21,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 200_000;
    let log_norm = -0.5 * d as f64 * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
    let mut sum = 0.0;
    for _ in 0..n {
        let v: Vec<f64> = (0..d).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let log_q = log_norm - v.iter().map(|x| x * x).sum::<f64>() / (2.0 * sigma * sigma);
        sum += (flow.log_prob(&v).unwrap().log_prob - log_q).exp();
    }
    let estimate = sum / n as f64;
    assert!((estimate - 1.0).abs() < 0.05, "integral estimate {estimate}");
}

#[test]
fn log_prob_is_latent_density_plus_log_det() {
    let flow = FlowModel::random(5, &FlowConfig { hidden: 8, ..Default::default() }, 3).unwrap();
    let v = [0.3, -1.0, 2.0, 0.0, 0.7];
    let r = flow.log_prob(&v).unwrap();
    let latent = -0.5 * r.z.iter().map(|z| z * z).sum::<f64>() - 2.5 * (2.0 * std::f64::consts::PI).ln();
    assert_eq!(r.log_prob, conv_core::flow::standard_normal_log_density(&r.z) + r.log_det);
    assert!((r.log_prob - (latent + r.log_det)).abs() < 1e-12);
}

#[test]
fn saved_flow_reproduces_f32_rounded_parameters() {
    let flow = FlowModel::random(6, &FlowConfig { hidden: 5, ..Default::default() }, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.bin");
    conv_core::flow::save_flow(&flow, &path).unwrap();
    let back = conv_core::flow::load_flow(&path).unwrap();
    let p = flow.param_count() as u64;
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 30 + 4 * p + 17);
    for (a, b) in flow.params().iter().zip(back.params()) {
        assert_eq!(*b, *a as f32 as f64);
    }
    let v = [0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
    let (za, _) = flow.forward(&v).unwrap();
    let (zb, _) = back.forward(&v).unwrap();
    assert!(za.iter().zip(&zb).all(|(a, b)| (a - b).abs() < 1e-5));
}
