//! Recording I/O, CSV import, manifests and synthetic datasets.

pub mod container;
pub mod csv_import;
pub mod manifest;
pub mod synth;

pub use container::{read_recording, write_recording};
pub use csv_import::{import_csv, CsvSidecar, VoltageUnit};
pub use manifest::{ArtifactAnnotation, DatasetManifest, EoSegment, RecordingEntry, SubjectEntry};
pub use synth::{synthesize_dataset, synthesize_subject, MotionModel, SynthesisConfig};
