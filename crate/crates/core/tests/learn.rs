use emgtask::error::Error;
use emgtask::features::FeatureImage;
use emgtask::learn::{
    bce_with_logit, calibrate, load_model, mean_loss, predict_epoch, save_model, sigmoid, train, Architecture,
    Classifier, LinearBaseline, ReferenceCnn, TrainConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

mod common;
use common::gradient_check;

const ROWS: usize = 16;
const FRAMES: usize = 12;
const CHANNELS: usize = 2;

/// Noise image; artifacts add broadband energy to the upper half of the
/// bands in every channel.
fn blob(artifact: bool, rng: &mut ChaCha8Rng) -> FeatureImage {
    let cols = FRAMES * CHANNELS;
    let values = (0..ROWS * cols)
        .map(|i| {
            let r = i / cols;
            let noise: f64 = rng.sample(StandardNormal);
            let lift = if artifact && r >= ROWS / 2 { 3.0 } else { 0.0 };
            (-40.0 + lift + noise) as f32
        })
        .collect();
    FeatureImage {
        rows: ROWS,
        cols,
        frames_per_channel: FRAMES,
        channels: (0..CHANNELS).map(|c| format!("c{c}")).collect(),
        values,
    }
}

fn dataset(n: usize, seed: u64) -> (Vec<FeatureImage>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let images = labels.iter().map(|&l| blob(l, &mut rng)).collect();
    (images, labels)
}

fn refs(images: &[FeatureImage]) -> Vec<&FeatureImage> {
    images.iter().collect()
}

fn accuracy(model: &dyn Classifier, images: &[FeatureImage], labels: &[bool]) -> f64 {
    let hits = images
        .iter()
        .zip(labels)
        .filter(|(img, &l)| predict_epoch(model, img).unwrap().is_artifact == l)
        .count();
    hits as f64 / labels.len() as f64
}

#[test]
fn cnn_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for label in [0.0, 1.0] {
        let mut model = ReferenceCnn::with_random_params(&mut rng);
        assert_eq!(model.params().len(), ReferenceCnn::N_PARAMS);
        let img = blob(label == 1.0, &mut rng);
        let err = gradient_check(&mut model, &img, label);
        assert!(err <= 1e-4, "relative error {err:e}");
    }
}

#[test]
fn cnn_gradients_with_montage_channel_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (rows, frames, channels) = (16, 5, 26);
    let img = FeatureImage {
        rows,
        cols: frames * channels,
        frames_per_channel: frames,
        channels: (0..channels).map(|c| format!("c{c}")).collect(),
        values: (0..rows * frames * channels)
            .map(|_| (-40.0 + 10.0 * rng.sample::<f64, _>(StandardNormal)) as f32)
            .collect(),
    };
    let mut model = ReferenceCnn::with_random_params(&mut rng);
    let err = gradient_check(&mut model, &img, 1.0);
    assert!(err <= 1e-4, "relative error {err:e}");
}

#[test]
fn linear_gradients_match_finite_differences() {
    let (images, labels) = dataset(10, 2);
    let mut model = LinearBaseline::new(true);
    train(
        &mut model,
        &refs(&images),
        &labels,
        &TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let err = gradient_check(&mut model, &images[3], 0.0);
    assert!(err <= 1e-4, "relative error {err:e}");
}

#[test]
fn both_architectures_separate_two_blobs() {
    let (train_x, train_y) = dataset(60, 7);
    let (test_x, test_y) = dataset(100, 8);
    for arch in [Architecture::LinearBaseline, Architecture::ReferenceCnn] {
        let mut model = arch.build(true);
        let cfg = TrainConfig {
            learning_rate: 0.02,
            epochs: 60,
            batch_size: 8,
            ..TrainConfig::default()
        };
        train(model.as_mut(), &refs(&train_x), &train_y, &cfg).unwrap();
        let acc = accuracy(model.as_ref(), &test_x, &test_y);
        assert!(acc >= 0.99, "{}: held-out accuracy {acc}", arch.as_str());
    }
}

#[test]
fn cnn_can_overfit_a_small_set() {
    let (x, y) = dataset(6, 31);
    let mut model = ReferenceCnn::new(true);
    let cfg = TrainConfig {
        learning_rate: 0.05,
        epochs: 300,
        batch_size: 6,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &refs(&x), &y, &cfg).unwrap();
    assert!(report.loss_trace.last().unwrap() < &report.loss_trace[0]);
    for (img, &l) in x.iter().zip(&y) {
        let p = predict_epoch(&model, img).unwrap().probability;
        let confidence = if l { p } else { 1.0 - p };
        assert!(confidence > 0.99, "{confidence}");
    }
}

#[test]
fn batch_size_clamped_to_training_set() {
    let (x, y) = dataset(30, 1);
    let mut model = LinearBaseline::new(true);
    let report = train(
        &mut model,
        &refs(&x),
        &y,
        &TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert_eq!(report.effective_batch_size, 30);
    assert_eq!(report.loss_trace.len(), 1);
}

#[test]
fn single_class_training_rejected() {
    let (x, _) = dataset(8, 1);
    let mut model = LinearBaseline::new(true);
    let err = train(&mut model, &refs(&x), &[true; 8], &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::SingleClass));
}

#[test]
fn untrained_models_refuse_to_predict() {
    let (x, y) = dataset(2, 1);
    for arch in [Architecture::LinearBaseline, Architecture::ReferenceCnn] {
        let model = arch.build(true);
        assert!(matches!(predict_epoch(model.as_ref(), &x[0]), Err(Error::Untrained)));
        assert!(matches!(
            calibrate(model.as_ref(), &refs(&x), &y, &TrainConfig::default()),
            Err(Error::Untrained)
        ));
    }
}

#[test]
fn calibration_semantics() {
    let (x, y) = dataset(40, 3);
    for arch in [Architecture::LinearBaseline, Architecture::ReferenceCnn] {
        let mut model = arch.build(true);
        let short = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        train(model.as_mut(), &refs(&x), &y, &short).unwrap();

        let zero = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (same, report) = calibrate(model.as_ref(), &refs(&x), &y, &zero).unwrap();
        assert!(report.loss_trace.is_empty());
        assert_eq!(same.params(), model.params());

        let before = mean_loss(model.as_ref(), &refs(&x), &y).unwrap();
        let more = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let (tuned, _) = calibrate(model.as_ref(), &refs(&x), &y, &more).unwrap();
        let after = mean_loss(tuned.as_ref(), &refs(&x), &y).unwrap();
        assert!(after < before, "{}: {after} >= {before}", arch.as_str());

        // different image geometry
        let mut other = x[0].clone();
        other.rows = ROWS / 2;
        other.values.truncate(other.rows * other.cols);
        let err = calibrate(model.as_ref(), &[&other, &x[1]], &[true, false], &more).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }), "{err}");
    }
}

#[test]
fn training_is_seed_deterministic() {
    let (x, y) = dataset(20, 4);
    let run = |seed| {
        let mut m = ReferenceCnn::new(true);
        let cfg = TrainConfig {
            epochs: 3,
            seed,
            ..TrainConfig::default()
        };
        train(&mut m, &refs(&x), &y, &cfg).unwrap();
        m.params().to_vec()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

#[test]
fn saved_models_reload_identically() {
    let (x, y) = dataset(20, 9);
    for arch in [Architecture::LinearBaseline, Architecture::ReferenceCnn] {
        let mut model = arch.build(true);
        train(
            model.as_mut(),
            &refs(&x),
            &y,
            &TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let bytes = save_model(model.as_ref());
        let back = load_model(&bytes).unwrap();
        assert_eq!(back.architecture(), arch);
        assert_eq!(back.params(), model.params());
        for img in &x {
            assert_eq!(
                predict_epoch(back.as_ref(), img).unwrap().probability,
                predict_epoch(model.as_ref(), img).unwrap().probability
            );
        }
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert!(load_model(&bad).is_err());
        assert!(load_model(&bytes[..bytes.len() - 3]).is_err());
    }
}

proptest! {
    #[test]
    fn bce_gradient_is_prediction_error(z in -30.0f64..30.0, positive in any::<bool>()) {
        let y = if positive { 1.0 } else { 0.0 };
        let (loss, dz) = bce_with_logit(z, y);
        prop_assert!(loss >= 0.0 && loss.is_finite());
        prop_assert!((dz - (sigmoid(z) - y)).abs() < 1e-12);
        // the naive formula cancels badly for large |z|
        if z.abs() < 15.0 {
            let direct = -(y * sigmoid(z).ln() + (1.0 - y) * (1.0 - sigmoid(z)).ln());
            prop_assert!((loss - direct).abs() <= 1e-9 * (1.0 + direct));
        }
    }

    #[test]
    fn sigmoid_is_symmetric(z in -700.0f64..700.0) {
        let s = sigmoid(z);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s + sigmoid(-z) - 1.0).abs() < 1e-12);
    }
}
