use conv_core::eval::auroc_scores;
use conv_core::trainer::{calibrate, fconv_score, train, ScoreWeights, TrainSample};
use conv_core::{FlowConfig, FlowModel, Label, TrainConfig, TrainData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const D: usize = 16;

/// natural ~ N(0, I), generated ~ N(mu, I) with |mu| = 1.
fn clouds(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let shift = 1.0 / (D as f64).sqrt();
    let mut draw = |s: f64| (0..D).map(|_| r.sample::<f64, _>(StandardNormal) + s).collect::<Vec<f64>>();
    let natural = (0..n).map(|_| draw(0.0)).collect();
    let generated = (0..n).map(|_| draw(shift)).collect();
    (natural, generated)
}

fn dataset(natural: &[Vec<f64>], generated: &[Vec<f64>], seed: u64) -> TrainData {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut data = TrainData::new(D);
    for (label, rows) in [(Label::Natural, natural), (Label::Generated, generated)] {
        for (i, v) in rows.iter().enumerate() {
            let view = v.iter().map(|x| x + 0.05 * r.sample::<f64, _>(StandardNormal)).collect();
            data.push(TrainSample {
                sample_id: format!("{label}-{i:05}"),
                label,
                original: v.clone(),
                views: vec![view],
            })
            .unwrap();
        }
    }
    data
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        epochs,
        val_fraction: 0.0,
        flow: FlowConfig {
            hidden: 32,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn mean_log_prob(flow: &FlowModel, rows: &[Vec<f64>]) -> f64 {
    rows.iter().map(|v| flow.log_prob(v).unwrap().log_prob).sum::<f64>() / rows.len() as f64
}

fn neg_log_prob_auroc(flow: &FlowModel, natural: &[Vec<f64>], generated: &[Vec<f64>]) -> f64 {
    let s = |rows: &[Vec<f64>]| rows.iter().map(|v| -flow.log_prob(v).unwrap().log_prob).collect::<Vec<_>>();
    auroc_scores(&s(natural), &s(generated)).unwrap()
}

#[test]
fn one_epoch_widens_the_log_prob_gap() {
    let (natural, generated) = clouds(500, 1);
    let (held_nat, held_gen) = clouds(500, 2);
    let mut flow = FlowModel::new(D, &config(1).flow, 0).unwrap();
    let gap = |f: &FlowModel| mean_log_prob(f, &held_nat) - mean_log_prob(f, &held_gen);
    let before = gap(&flow);
    train(&mut flow, &dataset(&natural, &generated, 3), &config(1)).unwrap();
    let after = gap(&flow);
    assert!(after > before, "gap {before} -> {after}");
}

#[test]
fn training_does_not_lower_held_out_auroc() {
    let (natural, generated) = clouds(1000, 4);
    let (held_nat, held_gen) = clouds(1000, 5);
    let mut flow = FlowModel::new(D, &config(5).flow, 0).unwrap();
    let before = neg_log_prob_auroc(&flow, &held_nat, &held_gen);
    let report = train(&mut flow, &dataset(&natural, &generated, 6), &config(5)).unwrap();
    let after = neg_log_prob_auroc(&flow, &held_nat, &held_gen);
    assert!(report.diverged.is_none());
    assert!(after >= before, "AUROC {before} -> {after}");
    assert!(after > 0.6, "{after}");
}

#[test]
fn fconv_scores_generated_higher_after_training() {
    let (natural, generated) = clouds(500, 7);
    let data = dataset(&natural, &generated, 8);
    let mut flow = FlowModel::new(D, &config(5).flow, 0).unwrap();
    train(&mut flow, &data, &config(5)).unwrap();
    calibrate(&mut flow, natural.iter().map(Vec::as_slice)).unwrap();
    let mean_score = |label: Label| {
        let rows: Vec<_> = data.samples().iter().filter(|s| s.label == label).collect();
        rows.iter()
            .map(|s| fconv_score(&flow, &s.original, &s.views, ScoreWeights::default()).unwrap())
            .sum::<f64>()
            / rows.len() as f64
    };
    let (nat, gen) = (mean_score(Label::Natural), mean_score(Label::Generated));
    assert!(gen > nat, "generated {gen} vs natural {nat}");
}

#[test]
fn training_is_bit_reproducible_across_worker_counts() {
    let (natural, generated) = clouds(100, 9);
    let data = dataset(&natural, &generated, 10);
    let run = |jobs: usize| {
        let cfg = TrainConfig {
            jobs,
            batch_size: 32,
            ..config(2)
        };
        let mut flow = FlowModel::new(D, &cfg.flow, 0).unwrap();
        let report = train(&mut flow, &data, &cfg).unwrap();
        (flow.params().to_vec(), report.history_csv())
    };
    let single = run(1);
    assert_eq!(single, run(1));
    assert_eq!(single, run(4));
}
