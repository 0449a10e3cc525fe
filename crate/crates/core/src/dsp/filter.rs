//! Zero-phase (forward-backward) FIR filtering.

use crate::dsp::convolve::FftConvolver;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::Recording;

/// A FIR kernel prepared for repeated forward-backward application.
pub struct ZeroPhaseFilter {
    conv: FftConvolver,
}

impl ZeroPhaseFilter {
    pub fn new(kernel: &[f64]) -> Self {
        ZeroPhaseFilter {
            conv: FftConvolver::new(kernel),
        }
    }

    pub fn with_signal_hint(kernel: &[f64], signal_len: usize) -> Self {
        ZeroPhaseFilter {
            conv: FftConvolver::with_signal_hint(kernel, signal_len),
        }
    }

    pub fn kernel_len(&self) -> usize {
        self.conv.kernel_len()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n < self.kernel_len() {
            return Err(Error::SignalTooShort {
                signal_len: n,
                required: self.kernel_len(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let pad = self.kernel_len() - 1;
        let padded = reflect_pad(x, pad);
        let forward = self.conv.convolve(&padded);
        let mut rev: Vec<f64> = forward.into_iter().rev().collect();
        rev = self.conv.convolve(&rev);
        rev.reverse();
        Ok(self.unpad(&rev, x.len()))
    }

    /// Filters two equal-length signals through one complex transform.
    pub fn apply_pair(&self, a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(a.len())?;
        let pad = self.kernel_len() - 1;
        let (fa, fb) = self.conv.convolve_pair(&reflect_pad(a, pad), &reflect_pad(b, pad));
        let ra: Vec<f64> = fa.into_iter().rev().collect();
        let rb: Vec<f64> = fb.into_iter().rev().collect();
        let (mut ba, mut bb) = self.conv.convolve_pair(&ra, &rb);
        ba.reverse();
        bb.reverse();
        Ok((self.unpad(&ba, a.len()), self.unpad(&bb, b.len())))
    }

    // Output sample i of the padded signal lands at i + (L - 1) after the two
    // full convolutions; the reflection pad adds another L - 1.
    fn unpad(&self, y: &[f64], n: usize) -> Vec<f64> {
        let offset = 2 * (self.kernel_len() - 1);
        y[offset..offset + n].to_vec()
    }

    /// Filters every row, two rows per transform.
    pub fn apply_rows(&self, rows: &[Vec<f64>], exec: Execution) -> Result<Vec<Vec<f64>>> {
        let pairs: Vec<(usize, Option<usize>)> = (0..rows.len())
            .step_by(2)
            .map(|i| (i, (i + 1 < rows.len()).then_some(i + 1)))
            .collect();
        let done = exec.try_map(&pairs, |&(i, j)| -> Result<Vec<Vec<f64>>> {
            match j {
                Some(j) if rows[i].len() == rows[j].len() => {
                    let (a, b) = self.apply_pair(&rows[i], &rows[j])?;
                    Ok(vec![a, b])
                }
                Some(j) => Ok(vec![self.apply(&rows[i])?, self.apply(&rows[j])?]),
                None => Ok(vec![self.apply(&rows[i])?]),
            }
        })?;
        Ok(done.into_iter().flatten().collect())
    }
}

/// Even reflection without repeating the edge sample.
fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    debug_assert!(pad < n.max(1));
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    out.extend((1..=pad).map(|i| x[n - 1 - i]));
    out
}

/// Applies `coefficients` forward then backward to every channel, giving
/// zero group delay and squared magnitude response.
pub fn filter_zero_phase(recording: &Recording, coefficients: &[f64]) -> Result<Recording> {
    filter_zero_phase_with(recording, coefficients, Execution::default())
}

pub fn filter_zero_phase_with(recording: &Recording, coefficients: &[f64], exec: Execution) -> Result<Recording> {
    if coefficients.is_empty() {
        return Err(Error::InvalidConfig("empty filter".into()));
    }
    let filter = ZeroPhaseFilter::with_signal_hint(coefficients, recording.n_samples() + 2 * coefficients.len());
    let samples = filter.apply_rows(&recording.samples, exec)?;
    Ok(Recording {
        subject_id: recording.subject_id.clone(),
        sampling_rate_hz: recording.sampling_rate_hz,
        channels: recording.channels.clone(),
        samples,
        annotations: recording.annotations.clone(),
    })
}
