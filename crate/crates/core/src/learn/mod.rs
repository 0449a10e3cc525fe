//! Binary artifact classifiers and their training loop.
//!
//! Every classifier exposes a flat parameter vector and a per-example
//! loss/gradient; [`train`] and [`calibrate`] share one mini-batch SGD loop
//! with momentum (`v = mu v + g`, `p -= lr v`) over binary cross-entropy.
//! Shuffling and initialization draw from a ChaCha8 stream seeded by
//! [`TrainConfig::seed`], so a run is a pure function of data and config.

mod cnn;
mod io;
mod linear;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureImage;

pub use cnn::ReferenceCnn;
pub use io::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use linear::LinearBaseline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    ReferenceCnn,
    LinearBaseline,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::ReferenceCnn => "reference_cnn",
            Architecture::LinearBaseline => "linear_baseline",
        }
    }

    pub fn build(self, standardize: bool) -> Box<dyn Classifier> {
        match self {
            Architecture::ReferenceCnn => Box::new(ReferenceCnn::new(standardize)),
            Architecture::LinearBaseline => Box::new(LinearBaseline::new(standardize)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    SgdMomentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    KaimingUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Clamped to the training-set size when larger.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub momentum: f64,
    pub weight_init: WeightInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 0.005,
            epochs: 80,
            seed: 0,
            optimizer: Optimizer::SgdMomentum,
            momentum: 0.9,
            weight_init: WeightInit::KaimingUniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        self.validate_steps()
    }

    fn validate_steps(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn effective_batch_size(&self, n_examples: usize) -> usize {
        self.batch_size.min(n_examples).max(1)
    }
}

/// Model-ready view of one feature image.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    /// `(mel rows, channels)` of the source image.
    pub shape: (usize, usize),
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// A trainable binary classifier with probability output.
pub trait Classifier: Send + Sync + std::fmt::Debug {
    fn architecture(&self) -> Architecture;

    /// `(mel rows, channels)` of the training images; `None` before training.
    fn input_shape(&self) -> Option<(usize, usize)>;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Allocates and randomly initializes parameters, fitting any
    /// data-dependent statistics on the training inputs.
    fn initialize(&mut self, inputs: &[&Encoded], rng: &mut ChaCha8Rng) -> Result<()>;

    /// Depends only on construction options, never on fitted state, so
    /// encodings may be computed once and shared between models.
    fn encode(&self, image: &FeatureImage) -> Result<Encoded>;

    fn logit(&self, x: &Encoded) -> f64;

    /// Binary cross-entropy of one example; adds its gradient into `grad`.
    fn loss_and_grad(&self, x: &Encoded, label: f64, grad: &mut [f64]) -> f64;

    fn clone_box(&self) -> Box<dyn Classifier>;

    /// Non-trainable state serialized alongside the parameters.
    fn aux(&self) -> Vec<f64> {
        Vec::new()
    }

    fn standardize(&self) -> bool;

    fn is_trained(&self) -> bool {
        self.input_shape().is_some()
    }
}

impl Clone for Box<dyn Classifier> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub loss_trace: Vec<f64>,
    pub effective_batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub is_artifact: bool,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y log p + (1-y) log(1-p)]` with `p = sigmoid(z)`, and `dL/dz`.
pub fn bce_with_logit(z: f64, y: f64) -> (f64, f64) {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    (softplus - y * z, sigmoid(z) - y)
}

/// Per-image z-score; a constant image maps to zeros.
pub(crate) fn zscore(values: &[f32]) -> Vec<f64> {
    let n = values.len().max(1) as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 0.0 {
        values.iter().map(|&v| (v as f64 - mean) / sd).collect()
    } else {
        vec![0.0; values.len()]
    }
}

fn check_labels(labels: &[bool]) -> Result<()> {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

fn check_shape(model: &dyn Classifier, inputs: &[&Encoded]) -> Result<()> {
    if let Some(expected) = model.input_shape() {
        for x in inputs {
            if x.shape != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    found: x.shape,
                });
            }
        }
    }
    Ok(())
}

/// Common shape of a training set.
pub(crate) fn common_shape(inputs: &[&Encoded]) -> Result<(usize, usize)> {
    let shape = inputs.first().ok_or(Error::SingleClass)?.shape;
    for x in inputs {
        if x.shape != shape {
            return Err(Error::DimensionMismatch {
                expected: shape,
                found: x.shape,
            });
        }
    }
    Ok(shape)
}

fn optimize(
    model: &mut dyn Classifier,
    inputs: &[&Encoded],
    labels: &[bool],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainReport> {
    let targets: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let n = inputs.len();
    let batch = config.effective_batch_size(n);
    let n_params = model.params().len();
    let mut velocity = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                total += model.loss_and_grad(inputs[i], targets[i], &mut grad);
            }
            let scale = 1.0 / chunk.len() as f64;
            for ((p, v), g) in model.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = config.momentum * *v + g * scale;
                *p -= config.learning_rate * *v;
            }
        }
        let mean = total / n as f64;
        if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        loss_trace.push(mean);
    }
    Ok(TrainReport {
        loss_trace,
        effective_batch_size: batch,
    })
}

fn check_inputs<T>(inputs: &[T], labels: &[bool]) -> Result<()> {
    if inputs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: inputs.len(),
            right: labels.len(),
        });
    }
    check_labels(labels)
}

pub fn encode_all(model: &dyn Classifier, images: &[&FeatureImage]) -> Result<Vec<Encoded>> {
    images.iter().map(|img| model.encode(img)).collect()
}

/// Trains `model` from a fresh initialization. Labels are `true` for
/// artifact epochs.
pub fn train(
    model: &mut dyn Classifier,
    images: &[&FeatureImage],
    labels: &[bool],
    config: &TrainConfig,
) -> Result<TrainReport> {
    let encoded = encode_all(model, images)?;
    let refs: Vec<&Encoded> = encoded.iter().collect();
    train_encoded(model, &refs, labels, config)
}

/// [`train`] on inputs already passed through [`Classifier::encode`].
pub fn train_encoded(
    model: &mut dyn Classifier,
    inputs: &[&Encoded],
    labels: &[bool],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    check_inputs(inputs, labels)?;
    common_shape(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    model.initialize(inputs, &mut rng)?;
    optimize(model, inputs, labels, config, &mut rng)
}

/// Continues optimization of a trained model on new data. `epochs = 0`
/// leaves the parameters untouched.
pub fn calibrate(
    pretrained: &dyn Classifier,
    images: &[&FeatureImage],
    labels: &[bool],
    config: &TrainConfig,
) -> Result<(Box<dyn Classifier>, TrainReport)> {
    let encoded = encode_all(pretrained, images)?;
    let refs: Vec<&Encoded> = encoded.iter().collect();
    calibrate_encoded(pretrained, &refs, labels, config)
}

pub fn calibrate_encoded(
    pretrained: &dyn Classifier,
    inputs: &[&Encoded],
    labels: &[bool],
    config: &TrainConfig,
) -> Result<(Box<dyn Classifier>, TrainReport)> {
    config.validate_steps()?;
    if !pretrained.is_trained() {
        return Err(Error::Untrained);
    }
    check_inputs(inputs, labels)?;
    check_shape(pretrained, inputs)?;
    let mut model = pretrained.clone_box();
    // distinct stream from a pretraining run with the same seed
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let report = optimize(model.as_mut(), inputs, labels, config, &mut rng)?;
    Ok((model, report))
}

/// Artifact probability and hard label (`probability >= 0.5`).
pub fn predict_epoch(model: &dyn Classifier, image: &FeatureImage) -> Result<Prediction> {
    predict_encoded(model, &model.encode(image)?)
}

pub fn predict_encoded(model: &dyn Classifier, input: &Encoded) -> Result<Prediction> {
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    check_shape(model, &[input])?;
    let probability = sigmoid(model.logit(input));
    Ok(Prediction {
        probability,
        is_artifact: is_artifact_probability(probability),
    })
}

pub fn is_artifact_probability(p: f64) -> bool {
    p >= 0.5
}

/// Mean binary cross-entropy of a trained model on a data set.
pub fn mean_loss(model: &dyn Classifier, images: &[&FeatureImage], labels: &[bool]) -> Result<f64> {
    if !model.is_trained() {
        return Err(Error::Untrained);
    }
    check_inputs(images, labels)?;
    let encoded = encode_all(model, images)?;
    let refs: Vec<&Encoded> = encoded.iter().collect();
    check_shape(model, &refs)?;
    let mut total = 0.0;
    for (x, &l) in refs.iter().zip(labels) {
        total += bce_with_logit(model.logit(x), if l { 1.0 } else { 0.0 }).0;
    }
    Ok(total / refs.len() as f64)
}
