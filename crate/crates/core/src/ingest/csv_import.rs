//! CSV import: one column per channel under a header row of channel names,
//! plus a JSON sidecar carrying the sampling rate, unit and annotations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Annotation, Recording};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum VoltageUnit {
    #[serde(rename = "V")]
    Volt,
    #[serde(rename = "mV")]
    Millivolt,
    #[default]
    #[serde(rename = "uV")]
    Microvolt,
}

impl VoltageUnit {
    pub fn to_microvolts(self) -> f64 {
        match self {
            VoltageUnit::Volt => 1e6,
            VoltageUnit::Millivolt => 1e3,
            VoltageUnit::Microvolt => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSidecar {
    pub subject_id: String,
    pub sampling_rate_hz: f64,
    #[serde(default)]
    pub unit: VoltageUnit,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

pub fn import_csv(csv_path: &Path, sidecar_path: &Path) -> Result<Recording> {
    let sidecar_text = std::fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let sidecar: CsvSidecar = serde_json::from_str(&sidecar_text)?;
    let file = std::fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    import_csv_reader(file, &sidecar)
}

pub fn import_csv_reader(reader: impl std::io::Read, sidecar: &CsvSidecar) -> Result<Recording> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let channels: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if channels.is_empty() {
        return Err(Error::MalformedHeader("CSV has no channel columns".into()));
    }
    let scale = sidecar.unit.to_microvolts();
    let mut samples = vec![Vec::new(); channels.len()];
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidRecording(e.to_string()))?;
        if record.len() != channels.len() {
            return Err(Error::InvalidRecording(format!(
                "row {} has {} fields, expected {}",
                line + 2,
                record.len(),
                channels.len()
            )));
        }
        for (row, field) in samples.iter_mut().zip(record.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::InvalidRecording(format!("row {}: {field:?} is not a number", line + 2)))?;
            row.push(v * scale);
        }
    }
    Recording::new(
        sidecar.subject_id.clone(),
        sidecar.sampling_rate_hz,
        channels,
        samples,
        sidecar.annotations.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn import_converts_millivolts() {
        let csv = "Fp1, F3\n0.001,0.002\n0.003,-0.004\n";
        let sidecar = CsvSidecar {
            subject_id: "S9".into(),
            sampling_rate_hz: 2.0,
            unit: VoltageUnit::Millivolt,
            annotations: vec![],
        };
        let r = import_csv_reader(csv.as_bytes(), &sidecar).unwrap();
        assert_eq!(r.channels, ["Fp1", "F3"]);
        assert!((r.samples[0][1] - 3.0).abs() < 1e-12);
        assert!((r.samples[1][1] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn ragged_row_rejected() {
        let csv = "a,b\n1,2\n3\n";
        let sidecar = CsvSidecar {
            subject_id: "S".into(),
            sampling_rate_hz: 1.0,
            unit: VoltageUnit::Microvolt,
            annotations: vec![],
        };
        assert!(import_csv_reader(csv.as_bytes(), &sidecar).is_err());
    }
}
