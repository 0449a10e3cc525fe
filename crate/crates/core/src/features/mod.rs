//! Mel-spectrogram features.
//!
//! Each montage channel is turned into a `n_mels x frames` mel power image
//! (non-overlapping Hann frames, power spectrum, triangular mel filters on the
//! `2595 log10(1 + f/700)` scale with area normalization, optional dB
//! compression). Channel images are concatenated left to right in montage
//! order.

pub mod export;

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Epoch;

pub use export::{read_feature_image, write_feature_csv, write_feature_image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrogramConfig {
    pub fft_length: usize,
    pub hop_length: usize,
    pub window: WindowKind,
    pub n_mels: usize,
    pub fmin_hz: f64,
    /// Upper mel edge; `None` means nyquist.
    pub fmax_hz: Option<f64>,
    pub power_exponent: f64,
    pub log_compress: bool,
    /// Lower clamp of the dB image.
    pub db_floor: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        SpectrogramConfig {
            fft_length: 409,
            hop_length: 409,
            window: WindowKind::Hann,
            n_mels: 128,
            fmin_hz: 0.0,
            fmax_hz: None,
            power_exponent: 2.0,
            log_compress: true,
            db_floor: -80.0,
        }
    }
}

impl SpectrogramConfig {
    pub fn n_bins(&self) -> usize {
        self.fft_length / 2 + 1
    }

    pub fn fmax(&self, sampling_rate_hz: f64) -> f64 {
        self.fmax_hz.unwrap_or(sampling_rate_hz / 2.0)
    }

    pub fn validate(&self, sampling_rate_hz: f64) -> Result<()> {
        let nyquist = sampling_rate_hz / 2.0;
        let fmax = self.fmax(sampling_rate_hz);
        if self.fft_length == 0 || self.hop_length == 0 || self.n_mels == 0 {
            return Err(Error::InvalidConfig(
                "fft_length, hop_length and n_mels must be positive".into(),
            ));
        }
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < fmax && fmax <= nyquist + 1e-9) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= fmin ({}) < fmax ({fmax}) <= nyquist ({nyquist})",
                self.fmin_hz
            )));
        }
        if !(self.power_exponent > 0.0) {
            return Err(Error::InvalidConfig("power exponent must be positive".into()));
        }
        Ok(())
    }

    /// Frames produced for a signal of `len` samples.
    pub fn frames(&self, len: usize) -> usize {
        if len < self.fft_length {
            0
        } else {
            (len - self.fft_length) / self.hop_length + 1
        }
    }
}

/// Row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters, `n_mels x (fft_length/2 + 1)`, each row scaled by
/// `2 / (upper_edge - lower_edge)`.
pub fn mel_filterbank(config: &SpectrogramConfig, sampling_rate_hz: f64) -> Result<Matrix> {
    config.validate(sampling_rate_hz)?;
    let n_bins = config.n_bins();
    let fft_freqs: Vec<f64> = (0..n_bins)
        .map(|k| k as f64 * sampling_rate_hz / config.fft_length as f64)
        .collect();
    let (lo, hi) = (hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax(sampling_rate_hz)));
    let points: Vec<f64> = (0..config.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
        .collect();
    let mut fb = Matrix::zeros(config.n_mels, n_bins);
    for m in 0..config.n_mels {
        let (left, center, right) = (points[m], points[m + 1], points[m + 2]);
        let norm = 2.0 / (right - left);
        let mut any = false;
        for (k, &f) in fft_freqs.iter().enumerate() {
            let up = (f - left) / (center - left);
            let down = (right - f) / (right - center);
            let w = up.min(down).max(0.0);
            if w > 0.0 {
                any = true;
                fb.set(m, k, w * norm);
            }
        }
        if !any {
            return Err(Error::EmptyMelFilter { row: m });
        }
    }
    Ok(fb)
}

/// Reusable STFT + mel projection for one configuration and sampling rate.
pub struct MelSpectrogram {
    config: SpectrogramConfig,
    sampling_rate_hz: f64,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: Matrix,
}

impl MelSpectrogram {
    pub fn new(config: &SpectrogramConfig, sampling_rate_hz: f64) -> Result<Self> {
        let filterbank = mel_filterbank(config, sampling_rate_hz)?;
        let fft = FftPlanner::new().plan_fft_forward(config.fft_length);
        Ok(MelSpectrogram {
            config: config.clone(),
            sampling_rate_hz,
            window: match config.window {
                WindowKind::Hann => hann(config.fft_length),
            },
            fft,
            filterbank,
        })
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &Matrix {
        &self.filterbank
    }

    /// `|DFT(window * frame)|^p`, `bins x frames`. Samples past the last
    /// full frame are ignored.
    pub fn stft_power(&self, signal: &[f64]) -> Result<Matrix> {
        let n_fft = self.config.fft_length;
        if signal.len() < n_fft {
            return Err(Error::SignalTooShort {
                signal_len: signal.len(),
                required: n_fft,
            });
        }
        let frames = self.config.frames(signal.len());
        let bins = self.config.n_bins();
        let mut out = Matrix::zeros(bins, frames);
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let p = self.config.power_exponent;
        for t in 0..frames {
            let start = t * self.config.hop_length;
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = Complex::new(signal[start + i] * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..bins {
                let mag2 = buf[k].norm_sqr();
                let v = if p == 2.0 { mag2 } else { mag2.sqrt().powf(p) };
                out.set(k, t, v);
            }
        }
        Ok(out)
    }

    /// Mel image of one channel, `n_mels x frames`, dB-compressed if configured.
    pub fn channel_image(&self, signal: &[f64]) -> Result<Matrix> {
        let power = self.stft_power(signal)?;
        let mut mel = Matrix::zeros(self.config.n_mels, power.cols);
        for m in 0..self.config.n_mels {
            let weights = self.filterbank.row(m);
            for t in 0..power.cols {
                let mut acc = 0.0;
                for (k, &w) in weights.iter().enumerate() {
                    if w != 0.0 {
                        acc += w * power.get(k, t);
                    }
                }
                mel.set(m, t, acc);
            }
        }
        if self.config.log_compress {
            let floor = self.config.db_floor;
            for v in &mut mel.data {
                *v = if *v > 0.0 { (10.0 * v.log10()).max(floor) } else { floor };
            }
        }
        Ok(mel)
    }

    pub fn epoch_image(&self, epoch: &Epoch) -> Result<FeatureImage> {
        if (epoch.sampling_rate_hz - self.sampling_rate_hz).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "epoch sampled at {} Hz, extractor built for {} Hz",
                epoch.sampling_rate_hz, self.sampling_rate_hz
            )));
        }
        let images = epoch
            .samples
            .iter()
            .map(|row| self.channel_image(row))
            .collect::<Result<Vec<_>>>()?;
        let frames = images.first().map_or(0, |m| m.cols);
        Ok(FeatureImage::concat(&images, frames, epoch.channels.clone()))
    }
}

/// Mel images of all channels side by side: `n_mels x (frames * channels)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub rows: usize,
    pub cols: usize,
    pub frames_per_channel: usize,
    pub channels: Vec<String>,
    pub values: Vec<f32>,
}

impl FeatureImage {
    fn concat(images: &[Matrix], frames: usize, channels: Vec<String>) -> Self {
        let rows = images.first().map_or(0, |m| m.rows);
        let cols = frames * images.len();
        let mut values = vec![0f32; rows * cols];
        for (c, img) in images.iter().enumerate() {
            for r in 0..rows {
                for t in 0..frames {
                    values[r * cols + c * frames + t] = img.get(r, t) as f32;
                }
            }
        }
        FeatureImage {
            rows,
            cols,
            frames_per_channel: frames,
            channels,
            values,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.cols + c]
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub fn stft_power(signal: &[f64], config: &SpectrogramConfig, sampling_rate_hz: f64) -> Result<Matrix> {
    MelSpectrogram::new(config, sampling_rate_hz)?.stft_power(signal)
}

pub fn epoch_to_feature(epoch: &Epoch, config: &SpectrogramConfig) -> Result<FeatureImage> {
    MelSpectrogram::new(config, epoch.sampling_rate_hz)?.epoch_image(epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EpochMeta, EpochRef, Label};

    const FS: f64 = 2048.0;

    fn epoch(channels: usize, seconds: f64, f: impl Fn(usize, usize) -> f64) -> Epoch {
        let n = (seconds * FS) as usize;
        Epoch {
            meta: EpochMeta {
                id: EpochRef {
                    subject: "S01".into(),
                    seq: 0,
                },
                label: Label::NonArtifact,
                task_id: None,
                repetition: None,
                onset_s: 0.0,
                duration_s: seconds,
            },
            channels: (0..channels).map(|c| format!("c{c}")).collect(),
            sampling_rate_hz: FS,
            samples: (0..channels).map(|c| (0..n).map(|i| f(c, i)).collect()).collect(),
        }
    }

    #[test]
    fn frame_and_bin_counts() {
        let cfg = SpectrogramConfig::default();
        let m = stft_power(&vec![0.0; 10240], &cfg, FS).unwrap();
        assert_eq!((m.rows, m.cols), (205, 25));
        assert!(m.data.iter().all(|&v| v == 0.0));
        assert_eq!(cfg.frames(20480), 50);
        assert!(stft_power(&[0.0; 100], &cfg, FS).is_err());
    }

    #[test]
    fn filterbank_rows_positive() {
        let fb = mel_filterbank(&SpectrogramConfig::default(), FS).unwrap();
        assert_eq!((fb.rows, fb.cols), (128, 205));
        for m in 0..128 {
            assert!(fb.row(m).iter().sum::<f64>() > 0.0, "row {m}");
        }
        // every bin strictly inside (fmin, fmax) is covered
        for k in 1..205 {
            assert!((0..128).any(|m| fb.get(m, k) > 0.0), "bin {k}");
        }
        let one = SpectrogramConfig {
            n_mels: 1,
            ..SpectrogramConfig::default()
        };
        let fb1 = mel_filterbank(&one, FS).unwrap();
        assert_eq!(fb1.rows, 1);
        assert!(fb1.row(0).iter().sum::<f64>() > 0.0);
        let too_many = SpectrogramConfig {
            n_mels: 500,
            ..SpectrogramConfig::default()
        };
        assert!(matches!(
            mel_filterbank(&too_many, FS),
            Err(Error::EmptyMelFilter { .. })
        ));
    }

    #[test]
    fn image_shapes() {
        let cfg = SpectrogramConfig::default();
        let short = epoch_to_feature(&epoch(26, 5.0, |c, i| ((c + 1) * i % 7) as f64), &cfg).unwrap();
        assert_eq!((short.rows, short.cols, short.frames_per_channel), (128, 650, 25));
        let long = epoch_to_feature(&epoch(26, 10.0, |c, i| ((c + 1) * i % 5) as f64), &cfg).unwrap();
        assert_eq!((long.rows, long.cols), (128, 1300));
        assert!(long.is_finite());
    }

    #[test]
    fn zero_epoch_hits_floor() {
        let img = epoch_to_feature(&epoch(2, 5.0, |_, _| 0.0), &SpectrogramConfig::default()).unwrap();
        assert!(img.values.iter().all(|&v| v == -80.0));
    }

    #[test]
    fn channel_blocks_follow_channel_order() {
        let cfg = SpectrogramConfig::default();
        let sig = |c: usize, i: usize| ((i as f64) * 0.01 * (c as f64 + 1.0)).sin() * (c + 1) as f64;
        let a = epoch_to_feature(&epoch(3, 5.0, sig), &cfg).unwrap();
        let b = epoch_to_feature(&epoch(3, 5.0, |c, i| sig(2 - c, i)), &cfg).unwrap();
        let f = a.frames_per_channel;
        for r in 0..a.rows {
            for c in 0..3 {
                for t in 0..f {
                    assert_eq!(a.get(r, c * f + t), b.get(r, (2 - c) * f + t));
                }
            }
        }
    }
}
