//! End-to-end behaviour of the training loop on synthetic Gaussian
//! benchmarks: bitwise determinism, supervised equivalence when the
//! unsupervised weight is zero, and a separability sanity bound.

use ssdg_core::data::{
    generate_domain, split_labelled, train_val_split, AugmentationConfig, DomainSpec, ShiftFamily,
};
use ssdg_core::train::{train_run, GatePolicy, NoopObserver, TrainConfig, TrainData};

/// Two zero-shift source domains, 10 labels per class: every domain draws
/// from the same well-separated class Gaussians.
fn two_domain_data(labels_per_class: usize, seed: u64) -> TrainData {
    let mut data = TrainData {
        labelled: Vec::new(),
        unlabelled: Vec::new(),
        val: Vec::new(),
    };
    for domain_id in 0..2u64 {
        let spec = DomainSpec {
            domain_id: format!("d{domain_id}"),
            num_classes: 4,
            examples_per_class: 50,
            feature_dim: 2,
            shift_family: ShiftFamily::Style,
            shift_magnitude: 0.0,
            seed: seed + domain_id as u64,
        };
        let examples = generate_domain(&spec).unwrap();
        let (train, val) = train_val_split(&examples, 0.9, seed + 100 + domain_id as u64).unwrap();
        let ds = split_labelled(&train, labels_per_class, seed + 200 + domain_id as u64).unwrap();
        data.labelled.extend(ds.labelled);
        data.unlabelled.extend(ds.unlabelled);
        data.val.extend(val);
    }
    data
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        num_classes: 4,
        hidden_dims: vec![16],
        epochs: 3,
        iterations_per_epoch: 5,
        batch_size: 4,
        mu: 3,
        mc_passes: 3,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let data = two_domain_data(10, 7);
    let config = small_config(42);

    let a = train_run(&data, &config, GatePolicy::Upl, &mut NoopObserver).unwrap();
    let b = train_run(&data, &config, GatePolicy::Upl, &mut NoopObserver).unwrap();

    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.best_epoch, b.best_epoch);
    assert_eq!(a.triple.last.max_abs_diff(&b.triple.last).unwrap(), 0.0);
    assert_eq!(a.triple.best.max_abs_diff(&b.triple.best).unwrap(), 0.0);
    assert_eq!(a.triple.ema.max_abs_diff(&b.triple.ema).unwrap(), 0.0);
    assert_eq!(a.iteration_uncertainty, b.iteration_uncertainty);
    assert_eq!(a.iteration_ece, b.iteration_ece);

    let other = TrainConfig {
        seed: 43,
        ..config
    };
    let c = train_run(&data, &other, GatePolicy::Upl, &mut NoopObserver).unwrap();
    assert!(c.triple.last.max_abs_diff(&a.triple.last).unwrap() > 0.0);
}

/// With lambda = 0 the unsupervised term contributes nothing, so both gated
/// policies must walk the exact supervised trajectory: unlabelled batches,
/// MC passes, and gate evaluations consume only their own RNG streams.
#[test]
fn zero_lambda_policies_match_supervised_exactly() {
    let data = two_domain_data(10, 7);
    let config = TrainConfig {
        lambda: 0.0,
        ..small_config(13)
    };

    let supervised = train_run(&data, &config, GatePolicy::Supervised, &mut NoopObserver).unwrap();
    let confidence = train_run(&data, &config, GatePolicy::Confidence, &mut NoopObserver).unwrap();
    let upl = train_run(&data, &config, GatePolicy::Upl, &mut NoopObserver).unwrap();

    for run in [&confidence, &upl] {
        assert_eq!(
            supervised.triple.last.max_abs_diff(&run.triple.last).unwrap(),
            0.0
        );
        assert_eq!(
            supervised.triple.ema.max_abs_diff(&run.triple.ema).unwrap(),
            0.0
        );
        let accs: Vec<f64> = run.metrics.iter().map(|m| m.val_accuracy).collect();
        let sup_accs: Vec<f64> = supervised.metrics.iter().map(|m| m.val_accuracy).collect();
        assert_eq!(accs, sup_accs);
    }
}

/// Zero-shift two-domain benchmark with 10 labels per class: the classes
/// sit 4+ standard deviations apart, so 200 iterations must reach 90%
/// validation accuracy. Checked for a supervised reference first, then for
/// the semi-supervised policies.
#[test]
fn zero_shift_benchmark_exceeds_ninety_percent() {
    let data = two_domain_data(10, 3);
    let config = TrainConfig {
        num_classes: 4,
        hidden_dims: vec![32],
        epochs: 10,
        iterations_per_epoch: 20,
        augment: AugmentationConfig {
            weak_noise_sigma: 0.1,
            strong_noise_sigma: 0.5,
            strong_mask_count: 1,
        },
        seed: 5,
        ..TrainConfig::default()
    };

    for policy in [GatePolicy::Supervised, GatePolicy::Confidence, GatePolicy::Upl] {
        let run = train_run(&data, &config, policy, &mut NoopObserver).unwrap();
        let final_acc = run.metrics.last().unwrap().val_accuracy;
        assert!(
            final_acc > 90.0,
            "{policy:?} reached only {final_acc:.2}% validation accuracy"
        );
    }
}

/// The best checkpoint corresponds to the highest validation accuracy seen,
/// and the stored epoch parameters reproduce it.
#[test]
fn best_checkpoint_tracks_peak_validation_accuracy() {
    let data = two_domain_data(10, 9);
    let config = small_config(17);
    let run = train_run(&data, &config, GatePolicy::Confidence, &mut NoopObserver).unwrap();

    let best_acc = run.metrics[run.best_epoch].val_accuracy;
    for m in &run.metrics {
        assert!(m.val_accuracy <= best_acc);
    }
    assert_eq!(
        run.triple
            .best
            .max_abs_diff(&run.epoch_params[run.best_epoch])
            .unwrap(),
        0.0
    );
    assert_eq!(
        run.triple
            .last
            .max_abs_diff(run.epoch_params.last().unwrap())
            .unwrap(),
        0.0
    );
}
