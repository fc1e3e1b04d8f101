use miniconvnet::model::{build_vgg16, build_vgg_mini, WeightFile};
use miniconvnet::{Error, Tensor, ALL_FROZEN};

fn batch(n: usize, dims: [usize; 3], seed: u32) -> Tensor {
    let len = n * dims.iter().product::<usize>();
    let data = (0..len)
        .map(|i| ((i as u32).wrapping_mul(2_654_435_761).wrapping_add(seed) >> 8) as f32 / (1 << 24) as f32)
        .collect();
    Tensor::from_vec(&[n, dims[0], dims[1], dims[2]], data).unwrap()
}

#[test]
fn forward_rows_are_distributions() {
    let model = build_vgg_mini([32, 32, 3], 7, 1).unwrap();
    let probs = model.forward(&batch(5, [32, 32, 3], 3)).unwrap();
    assert_eq!(probs.dims(), &[5, 7]);
    for row in probs.data().chunks(7) {
        assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
}

#[test]
fn batch_rows_are_independent() {
    let model = build_vgg_mini([16, 16, 1], 4, 2).unwrap();
    let x = batch(3, [16, 16, 1], 9);
    let all = model.forward(&x).unwrap();
    for i in 0..3 {
        let image = Tensor::from_vec(&[16, 16, 1], x.data()[i * 256..(i + 1) * 256].to_vec()).unwrap();
        let (_, probs) = model.predict(&image).unwrap();
        assert_eq!(probs.as_slice(), &all.data()[i * 4..(i + 1) * 4]);
    }
}

#[test]
fn wrong_input_shape_is_rejected() {
    let model = build_vgg_mini([16, 16, 1], 4, 2).unwrap();
    assert!(matches!(model.forward(&batch(1, [16, 16, 3], 0)), Err(Error::Shape(_))));
    assert!(matches!(model.predict(&Tensor::zeros(&[8, 8, 1]).unwrap()), Err(Error::Shape(_))));
}

#[test]
fn same_seed_same_weights() {
    let a = build_vgg_mini([16, 16, 1], 4, 11).unwrap();
    let b = build_vgg_mini([16, 16, 1], 4, 11).unwrap();
    let c = build_vgg_mini([16, 16, 1], 4, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn vgg16_freeze_default_leaves_twelve_trainable_tensors() {
    let mut model = build_vgg16([32, 32, 3], 10, 0).unwrap();
    model.set_trainable_boundary("block5_conv1").unwrap();
    let trainable: Vec<String> = model.parameters().filter(|(_, _, t)| *t).map(|(n, _, _)| n).collect();
    assert_eq!(trainable.len(), 12);
    assert_eq!(trainable[0], "block5_conv1/kernel");
    assert_eq!(trainable.last().unwrap(), "predictions/bias");

    model.set_trainable_boundary(ALL_FROZEN).unwrap();
    assert_eq!(model.trainable_parameter_count(), 0);
    assert!(matches!(model.set_trainable_boundary("block6_conv1"), Err(Error::Lookup(_))));
}

#[test]
fn vgg16_small_input_counts() {
    // At 32x32 the flatten output is 1x1x512.
    let model = build_vgg16([32, 32, 3], 10, 0).unwrap();
    let conv = 14_714_688;
    let head = 512 * 4096 + 4096 + 4096 * 4096 + 4096 + 4096 * 10 + 10;
    assert_eq!(model.parameter_count(), conv + head);
}

#[test]
fn head_replacement_keeps_the_backbone() {
    let source = build_vgg_mini([16, 16, 1], 10, 1).unwrap();
    let file = WeightFile::from_model(&source);
    let mut target = build_vgg_mini([16, 16, 1], 3, 2).unwrap();
    let report = target.apply_weights(&file, false).unwrap();
    assert_eq!(report.skipped, vec!["predictions/kernel", "predictions/bias"]);
    assert!(report.unused.is_empty());
    for (name, t, _) in target.parameters() {
        let original = file.get(&name).unwrap();
        if name.starts_with("predictions") {
            assert_ne!(t.dims(), original.dims());
        } else {
            assert_eq!(t, original, "{name}");
        }
    }
    assert!(matches!(target.apply_weights(&file, true), Err(Error::Shape(_))));
}

#[test]
fn f64_cast_matches_f32() {
    let model = build_vgg_mini([16, 16, 1], 5, 4).unwrap();
    let x = batch(2, [16, 16, 1], 5);
    let p32 = model.forward(&x).unwrap();
    let p64 = model.cast::<f64>().forward(&x.cast()).unwrap();
    for (a, b) in p32.data().iter().zip(p64.data()) {
        assert!((f64::from(*a) - b).abs() < 1e-5);
    }
}
