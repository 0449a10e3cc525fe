//! Bipolar derivation and epoch segmentation.

use crate::error::{Error, Result};
use crate::ingest::manifest::RecordingEntry;
use crate::model::{find_task, ArtifactTask, BipolarMontage, Epoch, EpochMeta, EpochRef, Label, Recording};

/// Derives one channel per montage pair as `anode - cathode`, in montage order.
pub fn derive_bipolar(recording: &Recording, montage: &BipolarMontage) -> Result<Recording> {
    let lookup = |name: &str| {
        recording
            .channel_index(name)
            .ok_or_else(|| Error::MissingChannel(name.to_string()))
    };
    let mut channels = Vec::with_capacity(montage.len());
    let mut samples = Vec::with_capacity(montage.len());
    for pair in &montage.pairs {
        let a = &recording.samples[lookup(&pair.anode)?];
        let c = &recording.samples[lookup(&pair.cathode)?];
        samples.push(a.iter().zip(c).map(|(x, y)| x - y).collect());
        channels.push(pair.name());
    }
    Ok(Recording {
        subject_id: recording.subject_id.clone(),
        sampling_rate_hz: recording.sampling_rate_hz,
        channels,
        samples,
        annotations: recording.annotations.clone(),
    })
}

/// Start offsets and lengths (seconds) of the eyes-open epochs inside a
/// segment: alternating 10 s and 5 s, starting with 10 s, incomplete tail
/// dropped.
pub fn eo_epoch_layout(duration_s: f64) -> Vec<(f64, f64)> {
    const PATTERN: [f64; 2] = [10.0, 5.0];
    let mut out = Vec::new();
    let mut t = 0.0;
    for len in PATTERN.iter().cycle() {
        if t + len > duration_s + 1e-9 {
            break;
        }
        out.push((t, *len));
        t += len;
    }
    out
}

/// A subject's labeled epochs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochSet {
    pub epochs: Vec<Epoch>,
}

impl EpochSet {
    pub fn metas(&self) -> Vec<EpochMeta> {
        self.epochs.iter().map(|e| e.meta.clone()).collect()
    }

    pub fn artifact_count(&self) -> usize {
        self.epochs.iter().filter(|e| e.meta.label.is_artifact()).count()
    }

    pub fn non_artifact_count(&self) -> usize {
        self.epochs.len() - self.artifact_count()
    }
}

fn cut(recording: &Recording, onset_s: f64, duration_s: f64) -> Result<Vec<Vec<f64>>> {
    let fs = recording.sampling_rate_hz;
    let start = (onset_s * fs).round() as usize;
    let len = (duration_s * fs).round() as usize;
    if onset_s < 0.0 || start + len > recording.n_samples() {
        return Err(Error::AnnotationOutOfRange {
            onset_s,
            duration_s,
            recording_s: recording.duration_s(),
        });
    }
    Ok(recording
        .samples
        .iter()
        .map(|row| row[start..start + len].to_vec())
        .collect())
}

/// Cuts artifact epochs at their annotations (with the task's mandated
/// duration) followed by eyes-open epochs. Epochs are numbered from
/// `first_seq` in that order.
pub fn segment_epochs(recording: &Recording, entry: &RecordingEntry, catalog: &[ArtifactTask]) -> Result<EpochSet> {
    segment_epochs_from(recording, entry, catalog, 0)
}

pub fn segment_epochs_from(
    recording: &Recording,
    entry: &RecordingEntry,
    catalog: &[ArtifactTask],
    first_seq: u32,
) -> Result<EpochSet> {
    entry.validate(catalog)?;
    let mut epochs = Vec::new();
    let mut seq = first_seq;
    let mut next_ref = || {
        let r = EpochRef {
            subject: recording.subject_id.clone(),
            seq,
        };
        seq += 1;
        r
    };
    for a in &entry.artifacts {
        let task = find_task(catalog, a.task_id)
            .ok_or_else(|| Error::InvalidManifest(format!("task {} not in catalog", a.task_id)))?;
        let samples = cut(recording, a.onset_s, task.epoch_duration_s)?;
        epochs.push(Epoch {
            meta: EpochMeta {
                id: next_ref(),
                label: Label::Artifact,
                task_id: Some(a.task_id),
                repetition: Some(a.repetition),
                onset_s: a.onset_s,
                duration_s: task.epoch_duration_s,
            },
            channels: recording.channels.clone(),
            sampling_rate_hz: recording.sampling_rate_hz,
            samples,
        });
    }
    for seg in &entry.eo_segments {
        if seg.onset_s + seg.duration_s > recording.duration_s() + 1e-9 {
            return Err(Error::AnnotationOutOfRange {
                onset_s: seg.onset_s,
                duration_s: seg.duration_s,
                recording_s: recording.duration_s(),
            });
        }
        for (offset, len) in eo_epoch_layout(seg.duration_s) {
            let onset = seg.onset_s + offset;
            let samples = cut(recording, onset, len)?;
            epochs.push(Epoch {
                meta: EpochMeta {
                    id: next_ref(),
                    label: Label::NonArtifact,
                    task_id: None,
                    repetition: None,
                    onset_s: onset,
                    duration_s: len,
                },
                channels: recording.channels.clone(),
                sampling_rate_hz: recording.sampling_rate_hz,
                samples,
            });
        }
    }
    Ok(EpochSet { epochs })
}
