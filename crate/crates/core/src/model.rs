//! Core domain types: recordings, the bipolar montage, the artifact task
//! catalog and labeled epochs.
//!
//! Catalog and montage are fixed protocol constants. Channel labels follow the
//! 10-10 system verbatim (case-sensitive), task identifiers use the short
//! string IDs (`kb_a`, `kn_db`, ...) used in result tables.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Protocol sampling rate in Hz.
pub const PROTOCOL_SAMPLING_RATE_HZ: f64 = 2048.0;

/// The 25 EEG channels of the recording cap. The first 18 are the electrodes
/// referenced by the bipolar montage; the remaining midline/central sites
/// complete the cap.
pub const DEFAULT_EEG_CHANNELS: [&str; 25] = [
    "Fp1", "Fpz", "Fp2", "F9", "F7", "F3", "Fz", "F4", "F8", "F10", "T9", "T7", "C3", "Cz", "C4", "T8", "T10", "P9",
    "P7", "Pz", "P8", "P10", "O1", "Oz", "O2",
];

/// Channel-major sample matrix: `rows[channel][sample]`.
pub type ChannelRows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub onset_s: f64,
    pub duration_s: f64,
    pub label: String,
}

/// A multi-channel recording in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub sampling_rate_hz: f64,
    pub channels: Vec<String>,
    pub samples: ChannelRows,
    pub annotations: Vec<Annotation>,
}

impl Recording {
    /// Builds a recording and checks its invariants.
    pub fn new(
        subject_id: impl Into<String>,
        sampling_rate_hz: f64,
        channels: Vec<String>,
        samples: ChannelRows,
        annotations: Vec<Annotation>,
    ) -> Result<Self> {
        let rec = Recording {
            subject_id: subject_id.into(),
            sampling_rate_hz,
            channels,
            samples,
            annotations,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return Err(Error::InvalidRecording(format!(
                "sampling rate must be positive, got {}",
                self.sampling_rate_hz
            )));
        }
        if self.channels.len() != self.samples.len() {
            return Err(Error::InvalidRecording(format!(
                "{} channel names but {} sample rows",
                self.channels.len(),
                self.samples.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &self.channels {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidRecording(format!("duplicate channel {name:?}")));
            }
        }
        let n = self.n_samples();
        if self.samples.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidRecording("channel rows differ in length".into()));
        }
        let duration = self.duration_s();
        for a in &self.annotations {
            if a.onset_s < 0.0 || a.duration_s < 0.0 || a.onset_s + a.duration_s > duration + 1e-9 {
                return Err(Error::AnnotationOutOfRange {
                    onset_s: a.onset_s,
                    duration_s: a.duration_s,
                    recording_s: duration,
                });
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sampling_rate_hz
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuscleGroup {
    MasseterTemporalis,
    Frontalis,
    Occipitalis,
}

impl MuscleGroup {
    pub const ALL: [MuscleGroup; 3] = [
        MuscleGroup::MasseterTemporalis,
        MuscleGroup::Frontalis,
        MuscleGroup::Occipitalis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MuscleGroup::MasseterTemporalis => "masseter_temporalis",
            MuscleGroup::Frontalis => "frontalis",
            MuscleGroup::Occipitalis => "occipitalis",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipolarPair {
    pub anode: String,
    pub cathode: String,
    pub muscle_group: MuscleGroup,
}

impl BipolarPair {
    /// Derived channel name, `"anode-cathode"`.
    pub fn name(&self) -> String {
        format!("{}-{}", self.anode, self.cathode)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipolarMontage {
    pub pairs: Vec<BipolarPair>,
}

impl BipolarMontage {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.pairs.iter().map(BipolarPair::name).collect()
    }

    pub fn group_size(&self, group: MuscleGroup) -> usize {
        self.pairs.iter().filter(|p| p.muscle_group == group).count()
    }

    /// EEG electrodes referenced by any pair of `group`, in first-use order.
    pub fn electrodes_of(&self, group: MuscleGroup) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in self.pairs.iter().filter(|p| p.muscle_group == group) {
            for e in [p.anode.as_str(), p.cathode.as_str()] {
                if !out.contains(&e) {
                    out.push(e);
                }
            }
        }
        out
    }
}

const MONTAGE_TABLE: [(&str, &str, MuscleGroup); 26] = {
    use MuscleGroup::*;
    [
        ("F9", "F7", MasseterTemporalis),
        ("F9", "F3", MasseterTemporalis),
        ("F7", "F3", MasseterTemporalis),
        ("T9", "T7", MasseterTemporalis),
        ("F9", "T9", MasseterTemporalis),
        ("F9", "T7", MasseterTemporalis),
        ("T9", "F7", MasseterTemporalis),
        ("F10", "F8", MasseterTemporalis),
        ("F10", "F4", MasseterTemporalis),
        ("F8", "F4", MasseterTemporalis),
        ("T10", "T8", MasseterTemporalis),
        ("F10", "T10", MasseterTemporalis),
        ("F10", "T8", MasseterTemporalis),
        ("T10", "F8", MasseterTemporalis),
        ("Fp1", "F3", Frontalis),
        ("Fp1", "Fp2", Frontalis),
        ("Fp1", "F4", Frontalis),
        ("Fp2", "F4", Frontalis),
        ("Fp2", "F3", Frontalis),
        ("O1", "P7", Occipitalis),
        ("O1", "P9", Occipitalis),
        ("P7", "P9", Occipitalis),
        ("O1", "O2", Occipitalis),
        ("O2", "P8", Occipitalis),
        ("O2", "P10", Occipitalis),
        ("P8", "P10", Occipitalis),
    ]
};

/// The 26-pair EMG derivation montage (14 masseter/temporalis, 5 frontalis,
/// 7 occipitalis).
pub fn default_montage() -> BipolarMontage {
    BipolarMontage {
        pairs: MONTAGE_TABLE
            .iter()
            .map(|&(a, c, g)| BipolarPair {
                anode: a.to_string(),
                cathode: c.to_string(),
                muscle_group: g,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    IsometricContraction,
    ContinuousMovement,
}

impl ArtifactKind {
    pub fn epoch_duration_s(self) -> f64 {
        match self {
            ArtifactKind::IsometricContraction => 5.0,
            ArtifactKind::ContinuousMovement => 10.0,
        }
    }

    pub fn protocol_repetitions(self) -> u32 {
        match self {
            ArtifactKind::IsometricContraction => 10,
            ArtifactKind::ContinuousMovement => 5,
        }
    }

    pub fn other(self) -> ArtifactKind {
        match self {
            ArtifactKind::IsometricContraction => ArtifactKind::ContinuousMovement,
            ArtifactKind::ContinuousMovement => ArtifactKind::IsometricContraction,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::IsometricContraction => "contraction",
            ArtifactKind::ContinuousMovement => "movement",
        }
    }
}

macro_rules! task_ids {
    ($( $variant:ident => $s:literal ),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum TaskId {
            $(
                #[serde(rename = $s)]
                $variant,
            )*
        }

        impl TaskId {
            pub const ALL: [TaskId; 12] = [$(TaskId::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(TaskId::$variant => $s,)*
                }
            }
        }

        impl FromStr for TaskId {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(TaskId::$variant),)*
                    other => Err(Error::InvalidManifest(format!("unknown task id {other:?}"))),
                }
            }
        }
    };
}

task_ids! {
    KbA => "kb_a",
    KbDb => "kb_db",
    KcDb => "kc_db",
    SrA => "sr_a",
    ShA => "sh_a",
    ShrDb => "shr_db",
    KlA => "kl_a",
    KrA => "kr_a",
    KlrDb => "klr_db",
    KsA => "ks_a",
    KhA => "kh_a",
    KnDb => "kn_db",
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactTask {
    pub task_id: TaskId,
    pub ordinal: u8,
    pub name: String,
    pub muscle_group: MuscleGroup,
    pub kind: ArtifactKind,
    pub epoch_duration_s: f64,
    pub protocol_repetitions: u32,
}

const CATALOG_TABLE: [(TaskId, &str, MuscleGroup, ArtifactKind); 12] = {
    use ArtifactKind::*;
    use MuscleGroup::*;
    [
        (TaskId::KbA, "Jaw tensing", MasseterTemporalis, IsometricContraction),
        (TaskId::KbDb, "Biting", MasseterTemporalis, ContinuousMovement),
        (TaskId::KcDb, "Teeth grinding", MasseterTemporalis, ContinuousMovement),
        (TaskId::SrA, "Frowning", Frontalis, IsometricContraction),
        (
            TaskId::ShA,
            "Eyebrows raising and holding",
            Frontalis,
            IsometricContraction,
        ),
        (TaskId::ShrDb, "Eyebrows up and down", Frontalis, ContinuousMovement),
        (
            TaskId::KlA,
            "Head turning left and holding",
            Occipitalis,
            IsometricContraction,
        ),
        (
            TaskId::KrA,
            "Head turning right and holding",
            Occipitalis,
            IsometricContraction,
        ),
        (
            TaskId::KlrDb,
            "Head turning left and right",
            Occipitalis,
            ContinuousMovement,
        ),
        (
            TaskId::KsA,
            "Head tilting downwards and holding",
            Occipitalis,
            IsometricContraction,
        ),
        (
            TaskId::KhA,
            "Head tilting upwards and holding",
            Occipitalis,
            IsometricContraction,
        ),
        (TaskId::KnDb, "Nodding", Occipitalis, ContinuousMovement),
    ]
};

/// The twelve artifact tasks in protocol order (ordinals 1..=12).
pub fn default_task_catalog() -> Vec<ArtifactTask> {
    CATALOG_TABLE
        .iter()
        .enumerate()
        .map(|(i, &(task_id, name, muscle_group, kind))| ArtifactTask {
            task_id,
            ordinal: i as u8 + 1,
            name: name.to_string(),
            muscle_group,
            kind,
            epoch_duration_s: kind.epoch_duration_s(),
            protocol_repetitions: kind.protocol_repetitions(),
        })
        .collect()
}

pub fn find_task(catalog: &[ArtifactTask], id: TaskId) -> Option<&ArtifactTask> {
    catalog.iter().find(|t| t.task_id == id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskSetName {
    Full,
    Selected,
}

impl TaskSetName {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskSetName::Full => "full",
            TaskSetName::Selected => "selected",
        }
    }
}

/// Ordinals removed by the selected variant: the occipitalis isometric
/// contractions.
pub const SELECTED_EXCLUDED_ORDINALS: [u8; 4] = [7, 8, 10, 11];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSetVariant {
    pub name: TaskSetName,
    pub excluded_ordinals: BTreeSet<u8>,
}

impl TaskSetVariant {
    pub fn full() -> Self {
        TaskSetVariant {
            name: TaskSetName::Full,
            excluded_ordinals: BTreeSet::new(),
        }
    }

    pub fn selected() -> Self {
        TaskSetVariant {
            name: TaskSetName::Selected,
            excluded_ordinals: SELECTED_EXCLUDED_ORDINALS.into_iter().collect(),
        }
    }

    pub fn from_name(name: TaskSetName) -> Self {
        match name {
            TaskSetName::Full => Self::full(),
            TaskSetName::Selected => Self::selected(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = TaskSetVariant::from_name(self.name);
        if expected.excluded_ordinals != self.excluded_ordinals {
            return Err(Error::InvalidConfig(format!(
                "task set {:?} must exclude exactly {:?}",
                self.name, expected.excluded_ordinals
            )));
        }
        Ok(())
    }

    pub fn includes(&self, task: &ArtifactTask) -> bool {
        !self.excluded_ordinals.contains(&task.ordinal)
    }

    pub fn includes_id(&self, id: TaskId) -> bool {
        let ordinal = TaskId::ALL.iter().position(|&t| t == id).unwrap() as u8 + 1;
        !self.excluded_ordinals.contains(&ordinal)
    }
}

/// Restricts a catalog to the tasks of a task-set variant, preserving order.
pub fn apply_task_set(catalog: &[ArtifactTask], variant: &TaskSetVariant) -> Vec<ArtifactTask> {
    catalog.iter().filter(|t| variant.includes(t)).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Artifact,
    NonArtifact,
}

impl Label {
    pub fn is_artifact(self) -> bool {
        self == Label::Artifact
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Artifact => "artifact",
            Label::NonArtifact => "non_artifact",
        }
    }
}

/// Stable reference to one epoch: subject plus its position in the
/// subject's epoch list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EpochRef {
    pub subject: String,
    pub seq: u32,
}

impl fmt::Display for EpochRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.subject, self.seq)
    }
}

/// Epoch provenance without the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMeta {
    pub id: EpochRef,
    pub label: Label,
    pub task_id: Option<TaskId>,
    pub repetition: Option<u32>,
    pub onset_s: f64,
    pub duration_s: f64,
}

impl EpochMeta {
    pub fn subject(&self) -> &str {
        &self.id.subject
    }

    pub fn kind(&self) -> Option<ArtifactKind> {
        self.task_id
            .map(|id| CATALOG_TABLE[TaskId::ALL.iter().position(|&t| t == id).unwrap()].3)
    }
}

/// A labeled fixed-length segment over montage-derived channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub meta: EpochMeta,
    pub channels: Vec<String>,
    pub sampling_rate_hz: f64,
    pub samples: ChannelRows,
}

impl Epoch {
    pub fn validate(&self) -> Result<()> {
        if self.meta.label.is_artifact() && (self.meta.task_id.is_none() || self.meta.repetition.is_none()) {
            return Err(Error::InvalidRecording(format!(
                "artifact epoch {} lacks task or repetition",
                self.meta.id
            )));
        }
        let expected = (self.meta.duration_s * self.sampling_rate_hz).round() as usize;
        if self.samples.iter().any(|r| r.len() != expected) {
            return Err(Error::InvalidRecording(format!(
                "epoch {} rows must hold {expected} samples",
                self.meta.id
            )));
        }
        Ok(())
    }
}
