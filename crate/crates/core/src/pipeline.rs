//! Recording-to-feature pipeline and the on-disk epoch store.
//!
//! Recordings are processed one at a time (filter, bipolar derivation,
//! segmentation, mel images) and dropped before the next is loaded, so peak
//! memory is bounded by a single recording plus the feature images.
//!
//! Store layout:
//!
//! ```text
//! <dir>/store.json    version, input hash, pipeline config, epoch metadata
//! <dir>/features.bin  one feature image per epoch, in metadata order
//! ```

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{derive_bipolar, segment_epochs_from, FilterSpec, Preprocessor};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::export::{decode_feature_image, encode_feature_image};
use crate::features::{FeatureImage, MelSpectrogram, SpectrogramConfig};
use crate::ingest::{read_recording, synthesize_subject, DatasetManifest, RecordingEntry, SynthesisConfig};
use crate::model::{default_montage, default_task_catalog, EpochMeta, EpochRef, Recording};

pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub filter: FilterSpec,
    pub spectrogram: SpectrogramConfig,
}

/// Epoch metadata with one feature image per epoch.
#[derive(Debug, Clone, Default)]
pub struct FeatureDataset {
    metas: Vec<EpochMeta>,
    images: Vec<FeatureImage>,
    index: HashMap<EpochRef, usize>,
}

impl FeatureDataset {
    pub fn new(metas: Vec<EpochMeta>, images: Vec<FeatureImage>) -> Result<Self> {
        let mut ds = FeatureDataset::default();
        ds.extend(metas.into_iter().zip(images))?;
        Ok(ds)
    }

    pub fn extend(&mut self, items: impl IntoIterator<Item = (EpochMeta, FeatureImage)>) -> Result<()> {
        for (meta, image) in items {
            if self.index.insert(meta.id.clone(), self.metas.len()).is_some() {
                return Err(Error::InvalidManifest(format!("duplicate epoch {}", meta.id)));
            }
            self.metas.push(meta);
            self.images.push(image);
        }
        Ok(())
    }

    pub fn metas(&self) -> &[EpochMeta] {
        &self.metas
    }

    pub fn images(&self) -> &[FeatureImage] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.metas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metas.is_empty()
    }

    pub fn position(&self, id: &EpochRef) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn image(&self, id: &EpochRef) -> Option<&FeatureImage> {
        self.position(id).map(|i| &self.images[i])
    }

    pub fn meta(&self, id: &EpochRef) -> Option<&EpochMeta> {
        self.position(id).map(|i| &self.metas[i])
    }

    pub fn subjects(&self) -> Vec<String> {
        self.metas
            .iter()
            .map(|m| m.subject().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// Filters, derives, segments and featurizes one recording. Epochs are
/// numbered from `first_seq`.
pub fn process_recording(
    recording: Recording,
    entry: &RecordingEntry,
    config: &PipelineConfig,
    first_seq: u32,
    exec: Execution,
) -> Result<Vec<(EpochMeta, FeatureImage)>> {
    let fs = recording.sampling_rate_hz;
    let catalog = default_task_catalog();
    let preprocessor = Preprocessor::new(&config.filter, fs)?;
    let mel = MelSpectrogram::new(&config.spectrogram, fs)?;
    let filtered = preprocessor.apply(&recording, exec)?;
    drop(recording);
    let bipolar = derive_bipolar(&filtered, &default_montage())?;
    drop(filtered);
    let set = segment_epochs_from(&bipolar, entry, &catalog, first_seq)?;
    drop(bipolar);
    let images = exec.try_map(&set.epochs, |e| mel.epoch_image(e))?;
    Ok(set.epochs.into_iter().map(|e| e.meta).zip(images).collect())
}

/// Synthesizes and featurizes every subject, one recording in memory at a
/// time.
pub fn features_from_synthesis(
    synth: &SynthesisConfig,
    config: &PipelineConfig,
    exec: Execution,
) -> Result<FeatureDataset> {
    synth.validate()?;
    let catalog = default_task_catalog();
    let montage = default_montage();
    let mut ds = FeatureDataset::default();
    for i in 0..synth.subjects {
        let (entry, recording) = synthesize_subject(synth, i, &catalog, &montage, exec)?;
        info!("featurizing synthetic subject {}", entry.subject_id);
        ds.extend(process_recording(recording, &entry.recordings[0], config, 0, exec)?)?;
    }
    Ok(ds)
}

pub fn features_from_manifest(
    manifest_path: &Path,
    config: &PipelineConfig,
    exec: Execution,
) -> Result<FeatureDataset> {
    let manifest = DatasetManifest::read(manifest_path)?;
    manifest.validate(&default_task_catalog())?;
    let mut ds = FeatureDataset::default();
    for subject in &manifest.subjects {
        let mut seq = 0u32;
        for entry in &subject.recordings {
            let path = DatasetManifest::resolve(manifest_path, entry);
            info!("featurizing {}", path.display());
            let recording = read_recording(&path)?;
            if recording.subject_id != subject.subject_id {
                return Err(Error::InvalidManifest(format!(
                    "{} holds subject {}, manifest says {}",
                    path.display(),
                    recording.subject_id,
                    subject.subject_id
                )));
            }
            let items = process_recording(recording, entry, config, seq, exec)?;
            seq += items.len() as u32;
            ds.extend(items)?;
        }
    }
    Ok(ds)
}

/// Content hash of a manifest, every recording it references and the
/// pipeline configuration.
pub fn hash_manifest_inputs(manifest_path: &Path, config: &PipelineConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    h.update(std::fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?);
    let manifest = DatasetManifest::read(manifest_path)?;
    for subject in &manifest.subjects {
        for entry in &subject.recordings {
            let path = DatasetManifest::resolve(manifest_path, entry);
            h.update(std::fs::read(&path).map_err(|e| Error::io(&path, e))?);
        }
    }
    Ok(hex::encode(h.finalize()))
}

pub fn hash_synthesis_inputs(synth: &SynthesisConfig, config: &PipelineConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    h.update(serde_json::to_vec(synth)?);
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub version: u32,
    pub input_hash: String,
    pub pipeline: PipelineConfig,
    pub epochs: Vec<EpochMeta>,
}

const STORE_JSON: &str = "store.json";
const STORE_BIN: &str = "features.bin";

pub fn write_store(dir: &Path, dataset: &FeatureDataset, input_hash: &str, config: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bin = Vec::new();
    for img in &dataset.images {
        encode_feature_image(img, &mut bin);
    }
    let bin_path = dir.join(STORE_BIN);
    std::fs::write(&bin_path, bin).map_err(|e| Error::io(&bin_path, e))?;
    let header = StoreHeader {
        version: STORE_VERSION,
        input_hash: input_hash.to_string(),
        pipeline: config.clone(),
        epochs: dataset.metas.clone(),
    };
    // header last: its presence marks a complete store
    let json_path = dir.join(STORE_JSON);
    let mut text = serde_json::to_string_pretty(&header)?;
    text.push('\n');
    std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
}

pub fn read_store_header(dir: &Path) -> Result<StoreHeader> {
    let path = dir.join(STORE_JSON);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let header: StoreHeader = serde_json::from_str(&text)?;
    if header.version != STORE_VERSION {
        return Err(Error::UnsupportedVersion {
            found: header.version as u16,
            supported: STORE_VERSION as u16,
        });
    }
    Ok(header)
}

pub fn read_store(dir: &Path) -> Result<(StoreHeader, FeatureDataset)> {
    let header = read_store_header(dir)?;
    let path = dir.join(STORE_BIN);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let mut pos = 0;
    let mut images = Vec::with_capacity(header.epochs.len());
    for _ in &header.epochs {
        images.push(decode_feature_image(&bytes, &mut pos)?);
    }
    if pos != bytes.len() {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes in feature store",
            bytes.len() - pos
        )));
    }
    let ds = FeatureDataset::new(header.epochs.clone(), images)?;
    Ok((header, ds))
}

/// True when `dir` holds a complete store built from `input_hash`.
pub fn store_is_current(dir: &Path, input_hash: &str) -> bool {
    read_store_header(dir).is_ok_and(|h| h.input_hash == input_hash) && dir.join(STORE_BIN).is_file()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Label;

    fn tiny() -> FeatureDataset {
        let meta = |seq, label| EpochMeta {
            id: EpochRef {
                subject: "S01".into(),
                seq,
            },
            label,
            task_id: None,
            repetition: None,
            onset_s: seq as f64,
            duration_s: 5.0,
        };
        let img = |v: f32| FeatureImage {
            rows: 2,
            cols: 2,
            frames_per_channel: 2,
            channels: vec!["a-b".into()],
            values: vec![v; 4],
        };
        FeatureDataset::new(
            vec![meta(0, Label::NonArtifact), meta(1, Label::NonArtifact)],
            vec![img(1.0), img(2.0)],
        )
        .unwrap()
    }

    #[test]
    fn store_roundtrip_and_currency() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        let cfg = PipelineConfig::default();
        write_store(dir.path(), &ds, "abc", &cfg).unwrap();
        assert!(store_is_current(dir.path(), "abc"));
        assert!(!store_is_current(dir.path(), "abd"));
        let (h, back) = read_store(dir.path()).unwrap();
        assert_eq!(h.pipeline, cfg);
        assert_eq!(back.metas(), ds.metas());
        assert_eq!(back.images(), ds.images());
        assert_eq!(back.image(&ds.metas()[1].id).unwrap().values[0], 2.0);
    }

    #[test]
    fn duplicate_epochs_rejected() {
        let ds = tiny();
        let mut metas = ds.metas().to_vec();
        metas[1].id.seq = 0;
        assert!(FeatureDataset::new(metas, ds.images().to_vec()).is_err());
    }
}
