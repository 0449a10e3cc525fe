//! Recording container (`.emgr`).
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! 0   8   magic  b"EMGTREC\n"
//! 8   2   u16    format version (1)
//! 10  4   u32    header length H in bytes
//! 14  H   header:
//!           str  subject id           (u16 byte length + UTF-8)
//!           f64  sampling rate, Hz
//!           u16  channel count C, then C x str channel name
//!           u64  samples per channel N
//!           u32  annotation count A, then A x (f64 onset s, f64 duration s, str label)
//! 14+H    C*N x f32 samples in microvolts, channel-major
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Annotation, Recording};

pub const MAGIC: &[u8; 8] = b"EMGTREC\n";
pub const FORMAT_VERSION: u16 = 1;

pub fn encode_recording(recording: &Recording) -> Result<Vec<u8>> {
    recording.validate()?;
    if let Some((c, i)) = recording
        .samples
        .iter()
        .enumerate()
        .find_map(|(c, row)| row.iter().position(|v| !v.is_finite()).map(|i| (c, i)))
    {
        return Err(Error::InvalidRecording(format!(
            "non-finite sample in channel {} at index {i}",
            recording.channels[c]
        )));
    }
    let mut header = Vec::new();
    put_str(&mut header, &recording.subject_id)?;
    header.extend_from_slice(&recording.sampling_rate_hz.to_le_bytes());
    let n_channels =
        u16::try_from(recording.channels.len()).map_err(|_| Error::InvalidRecording("too many channels".into()))?;
    header.extend_from_slice(&n_channels.to_le_bytes());
    for name in &recording.channels {
        put_str(&mut header, name)?;
    }
    header.extend_from_slice(&(recording.n_samples() as u64).to_le_bytes());
    header.extend_from_slice(&(recording.annotations.len() as u32).to_le_bytes());
    for a in &recording.annotations {
        header.extend_from_slice(&a.onset_s.to_le_bytes());
        header.extend_from_slice(&a.duration_s.to_le_bytes());
        put_str(&mut header, &a.label)?;
    }

    let payload = recording.channels.len() * recording.n_samples() * 4;
    let mut out = Vec::with_capacity(14 + header.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for row in &recording.samples {
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_recording(bytes: &[u8]) -> Result<Recording> {
    if bytes.len() < 14 || &bytes[..8] != MAGIC {
        return Err(Error::MalformedHeader("missing container magic".into()));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let header_len = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let header = bytes
        .get(14..14 + header_len)
        .ok_or_else(|| Error::MalformedHeader("header extends past end of file".into()))?;
    let mut r = Reader { buf: header, pos: 0 };
    let subject_id = r.string()?;
    let sampling_rate_hz = r.f64()?;
    let n_channels = r.u16()? as usize;
    let channels = (0..n_channels).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let n_samples = r.u64()?;
    let n_annotations = r.u32()? as usize;
    let mut annotations = Vec::with_capacity(n_annotations.min(1 << 16));
    for _ in 0..n_annotations {
        annotations.push(Annotation {
            onset_s: r.f64()?,
            duration_s: r.f64()?,
            label: r.string()?,
        });
    }
    if r.pos != header.len() {
        return Err(Error::MalformedHeader(format!(
            "{} trailing header bytes",
            header.len() - r.pos
        )));
    }

    let payload = &bytes[14 + header_len..];
    let expected = (n_channels as u64)
        .checked_mul(n_samples)
        .ok_or_else(|| Error::MalformedHeader("sample count overflows".into()))?;
    if payload.len() % 4 != 0 || payload.len() as u64 / 4 != expected {
        return Err(Error::SampleCountMismatch {
            expected,
            found: payload.len() as u64 / 4,
        });
    }
    let n = n_samples as usize;
    let samples = payload
        .chunks_exact(4 * n.max(1))
        .take(n_channels)
        .map(|row| {
            row.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect()
        })
        .collect::<Vec<Vec<f64>>>();
    let samples = if n == 0 { vec![Vec::new(); n_channels] } else { samples };
    Recording::new(subject_id, sampling_rate_hz, channels, samples, annotations)
}

pub fn read_recording(path: &Path) -> Result<Recording> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_recording(&bytes)
}

/// Writes the container; samples are stored as `f32`.
pub fn write_recording(recording: &Recording, path: &Path) -> Result<()> {
    let bytes = encode_recording(recording)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len =
        u16::try_from(s.len()).map_err(|_| Error::InvalidRecording(format!("string too long: {} bytes", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::MalformedHeader("header truncated".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::MalformedHeader("string is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn minimal() -> Recording {
        Recording::new("S01", 4.0, vec!["Fp1".into()], vec![vec![0.0, 1.0, 2.0, 3.0]], vec![]).unwrap()
    }

    #[test]
    fn minimal_roundtrip() {
        let bytes = encode_recording(&minimal()).unwrap();
        let back = decode_recording(&bytes).unwrap();
        assert_eq!(back, minimal());
        assert_eq!(encode_recording(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode_recording(&minimal()).unwrap();
        let cut = &bytes[..bytes.len() - 6];
        assert!(matches!(
            decode_recording(cut),
            Err(Error::SampleCountMismatch { expected: 4, .. })
        ));
    }

    #[test]
    fn bad_version_and_magic() {
        let mut bytes = encode_recording(&minimal()).unwrap();
        bytes[8] = 9;
        assert!(matches!(
            decode_recording(&bytes),
            Err(Error::UnsupportedVersion { found: 9, .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(decode_recording(&bytes), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn header_length_lies() {
        let mut bytes = encode_recording(&minimal()).unwrap();
        bytes[10..14].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(decode_recording(&bytes), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn nan_rejected_at_write() {
        let mut r = minimal();
        r.samples[0][2] = f64::NAN;
        assert!(matches!(encode_recording(&r), Err(Error::InvalidRecording(_))));
    }

    #[test]
    fn protocol_sized_file_roundtrip() {
        let names: Vec<String> = crate::model::DEFAULT_EEG_CHANNELS
            .iter()
            .map(|s| s.to_string())
            .collect();
        let rows: Vec<Vec<f64>> = (0..25)
            .map(|c| (0..4096).map(|i| ((i * (c + 1)) % 97) as f64 - 48.0).collect())
            .collect();
        let r = Recording::new(
            "S02",
            2048.0,
            names,
            rows,
            vec![Annotation {
                onset_s: 0.5,
                duration_s: 1.0,
                label: "kb_a/1".into(),
            }],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.emgr");
        write_recording(&r, &p).unwrap();
        assert_eq!(read_recording(&p).unwrap(), r);
    }

    proptest! {
        #[test]
        fn f32_valued_recordings_roundtrip(
            rows in prop::collection::vec(prop::collection::vec(-1e4f32..1e4, 6), 1..4),
            rate in 1.0f64..4096.0,
        ) {
            let names = (0..rows.len()).map(|i| format!("ch{i}")).collect();
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
            let r = Recording::new("p", rate, names, rows, vec![]).unwrap();
            let bytes = encode_recording(&r).unwrap();
            let back = decode_recording(&bytes).unwrap();
            prop_assert_eq!(&back, &r);
            prop_assert_eq!(encode_recording(&back).unwrap(), bytes);
        }
    }
}
