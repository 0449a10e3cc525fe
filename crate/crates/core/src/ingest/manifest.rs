//! Dataset manifest: subjects, recording paths and protocol annotations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{find_task, ArtifactTask, TaskId};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactAnnotation {
    pub task_id: TaskId,
    pub onset_s: f64,
    pub duration_s: f64,
    /// 1-based repetition index.
    pub repetition: u32,
}

/// Eyes-open resting segment supplying non-artifact epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EoSegment {
    pub onset_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    /// Container path, relative to the manifest's directory.
    pub path: String,
    pub artifacts: Vec<ArtifactAnnotation>,
    pub eo_segments: Vec<EoSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub subject_id: String,
    pub recordings: Vec<RecordingEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub subjects: Vec<SubjectEntry>,
}

impl RecordingEntry {
    /// Checks task membership, task-mandated durations and that no two
    /// annotated intervals overlap.
    pub fn validate(&self, catalog: &[ArtifactTask]) -> Result<()> {
        let mut spans: Vec<(f64, f64)> = Vec::new();
        for a in &self.artifacts {
            let task = find_task(catalog, a.task_id)
                .ok_or_else(|| Error::InvalidManifest(format!("task {} not in catalog", a.task_id)))?;
            if (a.duration_s - task.epoch_duration_s).abs() > 1e-9 {
                return Err(Error::InvalidManifest(format!(
                    "{} repetition {} lasts {} s, task requires {} s",
                    a.task_id, a.repetition, a.duration_s, task.epoch_duration_s
                )));
            }
            if a.repetition == 0 {
                return Err(Error::InvalidManifest("repetitions are 1-based".into()));
            }
            spans.push((a.onset_s, a.onset_s + a.duration_s));
        }
        for eo in &self.eo_segments {
            if eo.duration_s <= 0.0 {
                return Err(Error::InvalidManifest("empty EO segment".into()));
            }
            spans.push((eo.onset_s, eo.onset_s + eo.duration_s));
        }
        if spans.iter().any(|&(s, _)| s < 0.0) {
            return Err(Error::InvalidManifest("negative onset".into()));
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 - 1e-9 {
                return Err(Error::InvalidManifest(format!("intervals overlap at {:.3} s", w[1].0)));
            }
        }
        Ok(())
    }
}

impl DatasetManifest {
    pub fn validate(&self, catalog: &[ArtifactTask]) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::InvalidManifest(format!(
                "manifest version {} (supported: {MANIFEST_VERSION})",
                self.version
            )));
        }
        let mut ids: Vec<&str> = self.subjects.iter().map(|s| s.subject_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidManifest("duplicate subject id".into()));
        }
        for s in &self.subjects {
            for r in &s.recordings {
                r.validate(catalog)?;
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(manifest_path: &Path, entry: &RecordingEntry) -> PathBuf {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&entry.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_task_catalog;

    fn entry(artifacts: Vec<ArtifactAnnotation>) -> RecordingEntry {
        RecordingEntry {
            path: "x.emgr".into(),
            artifacts,
            eo_segments: vec![EoSegment {
                onset_s: 0.0,
                duration_s: 20.0,
            }],
        }
    }

    #[test]
    fn overlap_rejected() {
        let catalog = default_task_catalog();
        let e = entry(vec![ArtifactAnnotation {
            task_id: TaskId::KbA,
            onset_s: 18.0,
            duration_s: 5.0,
            repetition: 1,
        }]);
        assert!(e.validate(&catalog).is_err());
    }

    #[test]
    fn wrong_duration_rejected() {
        let catalog = default_task_catalog();
        let e = entry(vec![ArtifactAnnotation {
            task_id: TaskId::KnDb,
            onset_s: 30.0,
            duration_s: 5.0,
            repetition: 1,
        }]);
        assert!(e.validate(&catalog).is_err());
        let ok = entry(vec![ArtifactAnnotation {
            task_id: TaskId::KnDb,
            onset_s: 30.0,
            duration_s: 10.0,
            repetition: 1,
        }]);
        assert!(ok.validate(&catalog).is_ok());
    }
}
