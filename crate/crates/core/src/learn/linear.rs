//! Logistic regression on per-channel, per-band summary statistics.
//!
//! Each channel block of a feature image is reduced to the mean and standard
//! deviation over time of every mel band, giving `channels x rows x 2`
//! features independent of epoch width. Features are standardized with
//! training-set statistics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{bce_with_logit, common_shape, zscore, Architecture, Classifier, Encoded};
use crate::error::{Error, Result};
use crate::features::FeatureImage;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearBaseline {
    standardize: bool,
    shape: Option<(usize, usize)>,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// `d` weights then the bias.
    params: Vec<f64>,
}

impl LinearBaseline {
    pub fn new(standardize: bool) -> Self {
        LinearBaseline {
            standardize,
            shape: None,
            center: Vec::new(),
            scale: Vec::new(),
            params: Vec::new(),
        }
    }

    pub(crate) fn from_parts(
        standardize: bool,
        shape: Option<(usize, usize)>,
        aux: Vec<f64>,
        params: Vec<f64>,
    ) -> Result<Self> {
        let d = params.len().saturating_sub(1);
        if aux.len() != 2 * d || (shape.is_some() && shape.map(|(r, c)| 2 * r * c) != Some(d)) {
            return Err(Error::MalformedHeader("linear model sizes disagree".into()));
        }
        let (center, scale) = aux.split_at(d);
        Ok(LinearBaseline {
            standardize,
            shape,
            center: center.to_vec(),
            scale: scale.to_vec(),
            params,
        })
    }

    /// Pooled features of one image: `[channel][band][mean, std]`.
    pub fn pooled_features(image: &FeatureImage, standardize: bool) -> Vec<f64> {
        let values: Vec<f64> = if standardize {
            zscore(&image.values)
        } else {
            image.values.iter().map(|&v| v as f64).collect()
        };
        let frames = image.frames_per_channel;
        let mut out = Vec::with_capacity(image.n_channels() * image.rows * 2);
        for c in 0..image.n_channels() {
            for r in 0..image.rows {
                let start = r * image.cols + c * frames;
                let block = &values[start..start + frames];
                let mean = block.iter().sum::<f64>() / frames as f64;
                let var = block.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / frames as f64;
                out.push(mean);
                out.push(var.sqrt());
            }
        }
        out
    }

    fn standardized(&self, x: &[f64], i: usize) -> f64 {
        (x[i] - self.center[i]) * self.scale[i]
    }
}

impl Classifier for LinearBaseline {
    fn architecture(&self) -> Architecture {
        Architecture::LinearBaseline
    }

    fn input_shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn initialize(&mut self, inputs: &[&Encoded], rng: &mut ChaCha8Rng) -> Result<()> {
        let shape = common_shape(inputs)?;
        let d = inputs[0].data.len();
        let n = inputs.len() as f64;
        let mut center = vec![0.0; d];
        for x in inputs {
            for (c, v) in center.iter_mut().zip(&x.data) {
                *c += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for x in inputs {
            for ((s, v), c) in var.iter_mut().zip(&x.data).zip(&center) {
                *s += (v - c).powi(2) / n;
            }
        }
        self.scale = var
            .iter()
            .map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 })
            .collect();
        self.center = center;
        let bound = (6.0 / d as f64).sqrt();
        self.params = (0..d).map(|_| rng.gen_range(-bound..bound)).collect();
        self.params.push(0.0);
        self.shape = Some(shape);
        Ok(())
    }

    fn encode(&self, image: &FeatureImage) -> Result<Encoded> {
        let data = Self::pooled_features(image, self.standardize);
        Ok(Encoded {
            shape: (image.rows, image.n_channels()),
            rows: 1,
            cols: data.len(),
            data,
        })
    }

    fn logit(&self, x: &Encoded) -> f64 {
        let d = self.params.len() - 1;
        (0..d)
            .map(|i| self.params[i] * self.standardized(&x.data, i))
            .sum::<f64>()
            + self.params[d]
    }

    fn loss_and_grad(&self, x: &Encoded, label: f64, grad: &mut [f64]) -> f64 {
        let d = self.params.len() - 1;
        let (loss, dz) = bce_with_logit(self.logit(x), label);
        for (i, g) in grad[..d].iter_mut().enumerate() {
            *g += dz * self.standardized(&x.data, i);
        }
        grad[d] += dz;
        loss
    }

    fn clone_box(&self) -> Box<dyn Classifier> {
        Box::new(self.clone())
    }

    fn aux(&self) -> Vec<f64> {
        self.center.iter().chain(&self.scale).copied().collect()
    }

    fn standardize(&self) -> bool {
        self.standardize
    }
}
