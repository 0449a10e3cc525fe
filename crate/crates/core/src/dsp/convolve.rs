//! FFT overlap-add convolution.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Linear convolution against a fixed real kernel, block by block.
///
/// Two real signals can be pushed through one complex transform at once
/// (real and imaginary lanes) since the kernel is real.
pub struct FftConvolver {
    kernel_len: usize,
    fft_len: usize,
    spectrum: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftConvolver {
    pub fn new(kernel: &[f64]) -> Self {
        Self::with_signal_hint(kernel, usize::MAX)
    }

    /// Sizes the transform for signals of roughly `signal_len` samples.
    pub fn with_signal_hint(kernel: &[f64], signal_len: usize) -> Self {
        assert!(!kernel.is_empty(), "empty kernel");
        let l = kernel.len();
        let mut fft_len = (l.next_power_of_two() * 4).max(1024);
        let full = signal_len.saturating_add(l - 1);
        if full < fft_len {
            fft_len = full.next_power_of_two().max(l.next_power_of_two());
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let mut spectrum: Vec<Complex<f64>> = kernel
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(fft_len)
            .collect();
        forward.process(&mut spectrum);
        // fold the inverse transform's 1/N scaling into the kernel spectrum
        let scale = 1.0 / fft_len as f64;
        for c in &mut spectrum {
            *c *= scale;
        }
        FftConvolver {
            kernel_len: l,
            fft_len,
            spectrum,
            forward,
            inverse,
        }
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_len
    }

    /// Full linear convolution (`len + kernel_len - 1` samples).
    pub fn convolve(&self, signal: &[f64]) -> Vec<f64> {
        self.convolve_lanes(signal, None).0
    }

    /// Convolves two equal-length signals in one pass.
    pub fn convolve_pair(&self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(a.len(), b.len());
        let (x, y) = self.convolve_lanes(a, Some(b));
        (x, y.unwrap())
    }

    fn convolve_lanes(&self, re: &[f64], im: Option<&[f64]>) -> (Vec<f64>, Option<Vec<f64>>) {
        let n = re.len();
        if n == 0 {
            return (Vec::new(), im.map(|_| Vec::new()));
        }
        let out_len = n + self.kernel_len - 1;
        let block = self.fft_len - self.kernel_len + 1;
        let mut out_re = vec![0.0; out_len];
        let mut out_im = im.map(|_| vec![0.0; out_len]);
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        let mut scratch = vec![
            Complex::new(0.0, 0.0);
            self.forward
                .get_inplace_scratch_len()
                .max(self.inverse.get_inplace_scratch_len())
        ];

        let mut start = 0;
        while start < n {
            let end = (start + block).min(n);
            for (i, slot) in buf.iter_mut().enumerate() {
                let idx = start + i;
                *slot = if idx < end {
                    Complex::new(re[idx], im.map_or(0.0, |b| b[idx]))
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for (c, k) in buf.iter_mut().zip(&self.spectrum) {
                *c *= k;
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let valid = (end - start + self.kernel_len - 1).min(out_len - start);
            for i in 0..valid {
                out_re[start + i] += buf[i].re;
            }
            if let Some(o) = out_im.as_mut() {
                for i in 0..valid {
                    o[start + i] += buf[i].im;
                }
            }
            start = end;
        }
        (out_re, out_im)
    }
}

/// One-shot full convolution of two real sequences.
pub fn convolve_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    FftConvolver::with_signal_hint(short, long.len()).convolve(long)
}
