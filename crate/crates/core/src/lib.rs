//! EMG artifact detection in EEG recordings: bipolar EMG derivation,
//! filtering and epoching, mel-spectrogram features, repetition- and
//! task-set cross-validation plans, classifiers and nonparametric statistics.

pub mod cli;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod exec;
pub mod experiment;
pub mod features;
pub mod ingest;
pub mod learn;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod xplan;

pub use error::{Error, Result};
pub use exec::Execution;
