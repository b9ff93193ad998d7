//! Successive training epochs shift the score scale; a fixed threshold turns
//! that into large swings in multi-instance TPR, the recalibrated threshold
//! does not.

use multinst::analytic::{analytic_rates, optimal_c};
use multinst::stats::class_moments;
use multinst::synth::{generate, score_dataset, SynthConfig};
use multinst::train::{fit_observed, ScorerModel, TrainConfig};
use multinst::Threshold;

const N: u64 = 200;

fn spread(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

#[test]
fn recalibration_removes_epoch_to_epoch_drift() {
    let config = SynthConfig::default();
    let train = generate(&config, 40_000).unwrap();
    let held_out = generate(
        &SynthConfig {
            seed: 17,
            ..config.clone()
        },
        100_000,
    )
    .unwrap();
    let tc = TrainConfig {
        epochs: 12,
        learning_rate: 0.5,
        batch_size: 64,
        ..TrainConfig::default()
    };
    let mut snapshots: Vec<ScorerModel> = Vec::new();
    fit_observed(&train, &tc, |record, model| {
        if record.epoch >= 2 {
            snapshots.push(model.clone());
        }
    })
    .unwrap();

    let (mut fixed, mut calibrated) = (Vec::new(), Vec::new());
    for model in &snapshots {
        let scored = score_dataset(&held_out, |x| model.score(x)).unwrap();
        let m = class_moments(&scored).unwrap();
        fixed.push(analytic_rates(&m, N, Threshold::HALF).unwrap().tpr);
        calibrated.push(
            analytic_rates(&m, N, optimal_c(&m, N).unwrap().threshold)
                .unwrap()
                .tpr,
        );
    }
    let (s_fixed, s_cal) = (spread(&fixed), spread(&calibrated));
    assert!(s_fixed > 0.05, "fixed-threshold spread {s_fixed}");
    assert!(
        s_cal < 0.25 * s_fixed,
        "calibrated spread {s_cal} vs {s_fixed}"
    );
}
