use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use miniconvnet::augment::AugmentConfig;
use miniconvnet::data::{Dataset, Sample};
use miniconvnet::synth::glyph_dataset;
use miniconvnet::train::{evaluate, export_curves, split, train_split, TrainConfig};
use miniconvnet::{build_vgg_mini, train, Error, Model, Tensor};

/// Bright left half for class 0, bright right half for class 1, with noise.
fn halves(per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for label in 0..2 {
        for i in 0..per_class {
            let data = (0..64)
                .map(|p| {
                    let left = p % 8 < 4;
                    let lit = (left && label == 0) || (!left && label == 1);
                    let base = if lit { 0.8 } else { 0.2 };
                    base + rng.random_range(-0.15..0.15)
                })
                .collect();
            samples.push(Sample {
                image: Tensor::from_vec(&[8, 8, 1], data).unwrap(),
                label,
                source_path: format!("{label}/{i}"),
            });
        }
    }
    Dataset::new(samples, vec!["left".into(), "right".into()]).unwrap()
}

fn bits(model: &Model) -> Vec<Vec<u32>> {
    model
        .parameters()
        .map(|(_, t, _)| t.data().iter().map(|v| v.to_bits()).collect())
        .collect()
}

#[test]
fn separable_toy_loss_halves() {
    let data = halves(24, 1);
    let config = TrainConfig {
        epochs: 12,
        batch_size: 8,
        lr: 1e-3,
        seed: 3,
        augment: AugmentConfig::disabled(),
        val_split: 0.25,
        ..TrainConfig::default()
    };
    let out = train(build_vgg_mini([8, 8, 1], 2, 3).unwrap(), &data, &config).unwrap();
    let r = &out.report.records;
    assert_eq!(r.len(), 12);
    assert!(r.iter().all(|e| e.train_loss.is_finite() && e.val_loss.is_finite()));
    let (first, last) = (r[0].train_loss, r.last().unwrap().train_loss);
    assert!(last <= 0.5 * first, "loss {first} -> {last}");
    assert_eq!(r.last().unwrap().val_acc, 1.0);
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let data = glyph_dataset(3, 16, 1, 1).unwrap();
    let model = build_vgg_mini([16, 16, 1], 10, 1).unwrap();
    let before = bits(&model);
    let config = TrainConfig {
        epochs: 2,
        lr: 0.0,
        freeze_boundary: Some("block1_conv1".into()),
        ..TrainConfig::default()
    };
    let out = train(model, &data, &config).unwrap();
    assert_eq!(bits(&out.model), before);
    assert_eq!(out.optimizer.step_count, 2);
}

#[test]
fn same_seed_same_run() {
    let data = glyph_dataset(4, 16, 1, 2).unwrap();
    let config = TrainConfig {
        epochs: 2,
        batch_size: 8,
        lr: 1e-3,
        seed: 21,
        freeze_boundary: None,
        ..TrainConfig::default()
    };
    let run = || train(build_vgg_mini([16, 16, 1], 10, 21).unwrap(), &data, &config).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(bits(&a.model), bits(&b.model));
    let metrics = |o: &miniconvnet::train::TrainOutcome| o.report.records.iter().map(|r| r.metrics()).collect::<Vec<_>>();
    assert_eq!(metrics(&a), metrics(&b));

    let other = TrainConfig { seed: 22, ..config.clone() };
    let c = train(build_vgg_mini([16, 16, 1], 10, 21).unwrap(), &data, &other).unwrap();
    assert_ne!(bits(&a.model), bits(&c.model));
}

#[test]
fn curves_round_trip() {
    let data = glyph_dataset(2, 16, 1, 4).unwrap();
    let config = TrainConfig {
        epochs: 3,
        freeze_boundary: None,
        ..TrainConfig::default()
    };
    let out = train(build_vgg_mini([16, 16, 1], 10, 4).unwrap(), &data, &config).unwrap();
    let mut csv = Vec::new();
    export_curves(&out.report, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    for (line, rec) in lines[1..].iter().zip(&out.report.records) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(f[0] as usize, rec.epoch);
        for (parsed, actual) in f[1..].iter().zip([rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc]) {
            assert!((parsed - actual).abs() <= 1e-8 * actual.abs().max(1.0));
        }
    }
}

#[test]
fn class_mismatch_is_a_config_error() {
    let data = glyph_dataset(2, 16, 1, 4).unwrap();
    let model = build_vgg_mini([16, 16, 1], 3, 4).unwrap();
    let config = TrainConfig {
        epochs: 1,
        freeze_boundary: None,
        ..TrainConfig::default()
    };
    assert!(matches!(train(model, &data, &config), Err(Error::Config(_))));
}

#[test]
fn evaluation_is_deterministic_and_counts_partition() {
    let data = glyph_dataset(3, 16, 1, 6).unwrap();
    let model = build_vgg_mini([16, 16, 1], 10, 6).unwrap();
    let a = evaluate(&model, &data).unwrap();
    let b = evaluate(&model, &data).unwrap();
    assert_eq!(a.loss.to_bits(), b.loss.to_bits());
    assert_eq!(a.predictions, b.predictions);
    for c in &a.confusion {
        assert_eq!(c.total(), data.len());
    }
}

#[test]
fn non_finite_weights_abort_training() {
    let data = glyph_dataset(2, 16, 1, 4).unwrap();
    let (train_set, val_set) = split(&data, 0.5, 0).unwrap();
    let mut model = build_vgg_mini([16, 16, 1], 10, 4).unwrap();
    let layer = model.layer_mut("predictions").unwrap();
    if let miniconvnet::nn::LayerKind::Dense(d) = &mut layer.kind {
        d.bias.data_mut()[0] = f32::NAN;
    }
    let config = TrainConfig {
        epochs: 1,
        freeze_boundary: None,
        ..TrainConfig::default()
    };
    let err = train_split(model, &train_set, &val_set, &config, |_| {}).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)));
    assert_eq!(err.exit_code(), 3);
}
