//! Windowed-sinc FIR design: high-pass and power-line notch bank.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dsp::convolve::convolve_full;
use crate::error::{Error, Result};

/// Filter parameters of the preprocessing chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSpec {
    pub highpass_cutoff_hz: f64,
    pub notch_base_hz: f64,
    pub notch_max_hz: f64,
    /// Width of each notch stop band.
    pub notch_bandwidth_hz: f64,
    /// Transition width shared by the high-pass and every notch edge; sets
    /// the filter length (`ceil(3.3 * fs / width)`, odd).
    pub fir_transition_bw_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            highpass_cutoff_hz: 1.0,
            notch_base_hz: 50.0,
            notch_max_hz: 1001.0,
            notch_bandwidth_hz: 1.0,
            fir_transition_bw_hz: 1.0,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, sampling_rate_hz: f64) -> Result<()> {
        let nyquist = sampling_rate_hz / 2.0;
        let ok = self.highpass_cutoff_hz > 0.0
            && self.highpass_cutoff_hz < self.notch_base_hz
            && self.notch_base_hz <= self.notch_max_hz
            && self.notch_max_hz < nyquist
            && self.notch_bandwidth_hz > 0.0
            && self.fir_transition_bw_hz > 0.0;
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "filter spec must satisfy 0 < highpass ({}) < notch base ({}) <= notch max ({}) < nyquist ({nyquist}) with positive widths",
                self.highpass_cutoff_hz, self.notch_base_hz, self.notch_max_hz
            )));
        }
        Ok(())
    }

    pub fn filter_length(&self, sampling_rate_hz: f64) -> usize {
        let n = (3.3 * sampling_rate_hz / self.fir_transition_bw_hz).ceil() as usize;
        n | 1
    }

    /// Harmonic centers that receive a notch.
    pub fn notch_frequencies(&self, sampling_rate_hz: f64) -> Vec<f64> {
        let nyquist = sampling_rate_hz / 2.0;
        (1..)
            .map(|k| k as f64 * self.notch_base_hz)
            .take_while(|&f| f <= self.notch_max_hz && f < nyquist)
            .collect()
    }
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let m = (n - 1) as f64;
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / m).cos()).collect()
}

/// Unit-DC-gain windowed-sinc low-pass with half-amplitude point at `cutoff_hz`.
pub fn lowpass(cutoff_hz: f64, sampling_rate_hz: f64, len: usize) -> Vec<f64> {
    let fc = cutoff_hz / sampling_rate_hz;
    let mid = (len - 1) as f64 / 2.0;
    let window = hamming(len);
    let mut h: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 - mid;
            let s = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            s * window[i]
        })
        .collect();
    let dc: f64 = h.iter().sum();
    for v in &mut h {
        *v /= dc;
    }
    h
}

fn spectral_inversion(mut h: Vec<f64>) -> Vec<f64> {
    for v in &mut h {
        *v = -*v;
    }
    let mid = h.len() / 2;
    h[mid] += 1.0;
    h
}

/// Linear-phase high-pass FIR. The half-amplitude point sits at the cutoff;
/// the transition band spans `cutoff ± transition/2`.
pub fn design_highpass(spec: &FilterSpec, sampling_rate_hz: f64) -> Result<Vec<f64>> {
    if spec.highpass_cutoff_hz >= sampling_rate_hz / 2.0 {
        return Err(Error::InvalidConfig(format!(
            "high-pass cutoff {} Hz is not below nyquist {} Hz",
            spec.highpass_cutoff_hz,
            sampling_rate_hz / 2.0
        )));
    }
    spec.validate(sampling_rate_hz)?;
    let len = spec.filter_length(sampling_rate_hz);
    Ok(spectral_inversion(lowpass(
        spec.highpass_cutoff_hz,
        sampling_rate_hz,
        len,
    )))
}

/// One band-stop FIR per power-line harmonic. Each stop band is
/// `center ± bandwidth/2`, with transitions of `fir_transition_bw_hz` outside.
pub fn design_notch_bank(spec: &FilterSpec, sampling_rate_hz: f64) -> Result<Vec<Vec<f64>>> {
    spec.validate(sampling_rate_hz)?;
    let len = spec.filter_length(sampling_rate_hz);
    let half = (spec.notch_bandwidth_hz + spec.fir_transition_bw_hz) / 2.0;
    Ok(spec
        .notch_frequencies(sampling_rate_hz)
        .into_iter()
        .map(|f0| {
            let upper = lowpass(f0 + half, sampling_rate_hz, len);
            let lower = lowpass(f0 - half, sampling_rate_hz, len);
            let band: Vec<f64> = upper.iter().zip(&lower).map(|(u, l)| u - l).collect();
            spectral_inversion(band)
        })
        .collect())
}

/// Single kernel equivalent to applying `kernels` in sequence.
pub fn cascade(kernels: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![1.0];
    for k in kernels {
        out = convolve_full(&out, k);
    }
    out
}

/// |H(f)| of a real FIR, evaluated directly from the coefficients.
pub fn magnitude_response(h: &[f64], freq_hz: f64, sampling_rate_hz: f64) -> f64 {
    let w = 2.0 * PI * freq_hz / sampling_rate_hz;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &c) in h.iter().enumerate() {
        let phase = w * n as f64;
        re += c * phase.cos();
        im -= c * phase.sin();
    }
    (re * re + im * im).sqrt()
}

pub fn to_db(gain: f64) -> f64 {
    20.0 * gain.max(1e-300).log10()
}
