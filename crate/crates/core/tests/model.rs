use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ofpnet::autograd::Tensor;
use ofpnet::lightfield::{Colorspace, LightField};
use ofpnet::model::{
    count_params, lightfields_to_tensor, load_checkpoint, make_ablation, save_checkpoint,
    tensor_to_lightfields, Checkpoint, ModelConfig, OfpNet, ABLATION_VARIANTS,
};
use ofpnet::Error;

fn random_field(seed: u64, angular: (usize, usize), spatial: (usize, usize)) -> LightField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LightField::from_fn(angular, spatial, Colorspace::Y, |_, _, _, _, _| rng.gen())
}

/// Desk model with every parameter, head included, set to small random values.
fn random_model(seed: u64) -> OfpNet<f32> {
    let mut model = OfpNet::<f32>::new(ModelConfig::desk(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for id in 0..model.params().len() {
        for x in model.params_mut().value_mut(id).data_mut() {
            if *x == 0.0 {
                *x = rng.gen_range(-0.05..0.05);
            }
        }
    }
    model
}

fn angular_weight_ids(model: &OfpNet<f32>) -> Vec<usize> {
    model
        .params()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.name.contains("angular.weight"))
        .map(|(i, _)| i)
        .collect()
}

#[test]
fn fresh_model_is_the_identity() {
    let model = OfpNet::<f32>::new(ModelConfig::desk(), 0).unwrap();
    let lf = random_field(1, (5, 5), (16, 20));
    assert_eq!(model.forward(&lf).unwrap().data(), lf.data());
}

#[test]
fn batch_entries_are_processed_independently() {
    let model = random_model(2);
    let (a, b) = (
        random_field(3, (5, 5), (16, 16)),
        random_field(4, (5, 5), (16, 16)),
    );
    let joint = model
        .forward_tensor(&lightfields_to_tensor::<f32>(&[&a, &b]).unwrap())
        .unwrap();
    let split = tensor_to_lightfields(&joint, (5, 5)).unwrap();
    assert_eq!(split.len(), 2);
    assert_eq!(split[0].data(), model.forward(&a).unwrap().data());
    assert_eq!(split[1].data(), model.forward(&b).unwrap().data());
}

#[test]
fn angular_mixing_is_the_only_cross_view_path() {
    // With every angular kernel reduced to its centre tap, views no longer
    // interact, so shuffling the views shuffles the output the same way.
    let mut model = random_model(5);
    for id in angular_weight_ids(&model) {
        let t: &mut Tensor<f32> = model.params_mut().value_mut(id);
        for (i, x) in t.data_mut().iter_mut().enumerate() {
            if i % 9 != 4 {
                *x = 0.0;
            }
        }
    }
    let lf = random_field(6, (5, 5), (12, 12));
    let perm = |u: usize, v: usize| ((u * 3 + v) % 5, (v * 2 + u + 1) % 5);
    let shuffle = |f: &LightField| {
        LightField::from_fn((5, 5), (12, 12), Colorspace::Y, |u, v, y, x, c| {
            let (pu, pv) = perm(u, v);
            f.data()[[pu, pv, y, x, c]]
        })
    };
    let permuted = model.forward(&shuffle(&lf)).unwrap();
    let expected = shuffle(&model.forward(&lf).unwrap());
    let diff = permuted
        .data()
        .iter()
        .zip(expected.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(diff < 1e-6, "{diff}");

    // The full model does mix views: changing one view moves the others.
    let full = random_model(5);
    let mut poked = lf.clone();
    poked.data_mut()[[2, 2, 6, 6, 0]] += 0.5;
    let (a, b) = (full.forward(&lf).unwrap(), full.forward(&poked).unwrap());
    assert_ne!(a.view(2, 3), b.view(2, 3));
}

#[test]
fn transposed_grid_with_transposed_kernels_transposes_output() {
    let model = random_model(7);
    let mut transposed = model.clone();
    for id in angular_weight_ids(&model) {
        let src = model.params().get(id).value.clone();
        let dst = transposed.params_mut().value_mut(id);
        let n = src.len() / 9;
        for k in 0..n {
            for i in 0..3 {
                for j in 0..3 {
                    dst.data_mut()[k * 9 + j * 3 + i] = src.data()[k * 9 + i * 3 + j];
                }
            }
        }
    }
    let lf = random_field(8, (5, 5), (12, 12));
    let swap = |f: &LightField| {
        LightField::from_fn((5, 5), (12, 12), Colorspace::Y, |u, v, y, x, c| {
            f.data()[[v, u, y, x, c]]
        })
    };
    let a = transposed.forward(&swap(&lf)).unwrap();
    let b = swap(&model.forward(&lf).unwrap());
    let diff = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0f32, f32::max);
    assert!(diff < 1e-5, "{diff}");
}

#[test]
fn single_and_double_precision_agree() {
    let model = random_model(9);
    let lf = random_field(10, (5, 5), (16, 16));
    let x32 = lightfields_to_tensor::<f32>(&[&lf]).unwrap();
    let x64 = lightfields_to_tensor::<f64>(&[&lf]).unwrap();
    let y32 = model.forward_tensor(&x32).unwrap();
    let y64 = model.cast::<f64>().forward_tensor(&x64).unwrap();
    let diff = y32.cast::<f64>().max_abs_diff(&y64);
    assert!(diff < 1e-4, "{diff}");
}

#[test]
fn invalid_inputs_are_size_errors() {
    let model = random_model(11);
    assert!(matches!(
        model.forward(&random_field(0, (5, 5), (18, 16))),
        Err(Error::Size(_))
    ));
    assert!(model.forward(&random_field(0, (3, 3), (16, 16))).is_err());
    let rgb = LightField::zeros((5, 5), (16, 16), Colorspace::Rgb);
    assert!(model.forward(&rgb).is_err());
}

#[test]
fn checkpoints_round_trip_and_check_the_architecture() {
    let model = random_model(12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.safetensors");
    let ckpt = Checkpoint {
        model: model.clone(),
        moments: None,
        state: Some(serde_json::json!({"note": 1})),
    };
    save_checkpoint(&path, &ckpt).unwrap();
    let back = load_checkpoint(&path, &ModelConfig::desk()).unwrap();
    assert_eq!(back.model.params(), model.params());
    assert_eq!(back.state, ckpt.state);
    let err = load_checkpoint(&path, &ModelConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    std::fs::write(&path, b"not a checkpoint").unwrap();
    assert!(matches!(
        load_checkpoint(&path, &ModelConfig::desk()),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn ablation_variants_build_and_differ() {
    let base = ModelConfig::desk();
    let mut configs = Vec::new();
    for v in ABLATION_VARIANTS {
        let cfg = make_ablation(&base, v).unwrap();
        let model = OfpNet::<f32>::new(cfg.clone(), 0).unwrap();
        assert_eq!(model.param_count(), count_params(&cfg));
        let lf = random_field(1, (5, 5), (16, 16));
        assert_eq!(
            model.forward(&lf).unwrap().data(),
            lf.data(),
            "{v} is not the identity at init"
        );
        configs.push(cfg);
    }
    assert!(make_ablation(&base, "freq:nonsense").is_err());
    let distinct: Vec<_> = configs
        .iter()
        .enumerate()
        .filter(|(i, c)| !configs[..*i].contains(c))
        .collect();
    assert!(distinct.len() >= 6);
}
