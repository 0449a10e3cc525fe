//! Filtering, bipolar derivation and epoch segmentation.
//!
//! All processing runs in `f64`.

pub mod convolve;
pub mod filter;
pub mod fir;
pub mod segment;

pub use filter::{filter_zero_phase, filter_zero_phase_with, ZeroPhaseFilter};
pub use fir::{design_highpass, design_notch_bank, magnitude_response, FilterSpec};
pub use segment::{derive_bipolar, eo_epoch_layout, segment_epochs, segment_epochs_from, EpochSet};

use crate::error::Result;
use crate::exec::Execution;
use crate::model::Recording;

/// High-pass plus notch bank, folded into one kernel and applied
/// forward-backward.
pub struct Preprocessor {
    kernel: Vec<f64>,
}

impl Preprocessor {
    pub fn new(spec: &FilterSpec, sampling_rate_hz: f64) -> Result<Self> {
        let mut kernels = vec![design_highpass(spec, sampling_rate_hz)?];
        kernels.extend(design_notch_bank(spec, sampling_rate_hz)?);
        Ok(Preprocessor {
            kernel: fir::cascade(&kernels),
        })
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn apply(&self, recording: &Recording, exec: Execution) -> Result<Recording> {
        filter_zero_phase_with(recording, &self.kernel, exec)
    }
}
