//! Feature image files.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! 0   8   magic  b"EMGTFEAT"
//! 8   2   u16    version (1)
//! 10  4   u32    rows (mel bands)
//! 14  4   u32    cols
//! 18  4   u32    frames per channel
//! 22  2   u16    channel count C, then C x (u16 length + UTF-8 name)
//! ..      rows*cols x f32, row-major
//! ```
//!
//! The CSV form has one line per mel band, values separated by commas.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureImage;

pub const FEATURE_MAGIC: &[u8; 8] = b"EMGTFEAT";
pub const FEATURE_VERSION: u16 = 1;

pub fn encode_feature_image(img: &FeatureImage, out: &mut Vec<u8>) {
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(img.rows as u32).to_le_bytes());
    out.extend_from_slice(&(img.cols as u32).to_le_bytes());
    out.extend_from_slice(&(img.frames_per_channel as u32).to_le_bytes());
    out.extend_from_slice(&(img.channels.len() as u16).to_le_bytes());
    for name in &img.channels {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for v in &img.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Decodes one image starting at `*pos`, advancing it.
pub fn decode_feature_image(bytes: &[u8], pos: &mut usize) -> Result<FeatureImage> {
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(*pos..*pos + n)
            .ok_or_else(|| Error::MalformedHeader("feature image truncated".into()))?;
        *pos += n;
        Ok(s)
    };
    if take(8)? != FEATURE_MAGIC {
        return Err(Error::MalformedHeader("missing feature magic".into()));
    }
    let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FEATURE_VERSION,
        });
    }
    let rows = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let frames_per_channel = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let n_channels = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
    let mut channels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        channels.push(
            String::from_utf8(take(len)?.to_vec())
                .map_err(|_| Error::MalformedHeader("channel name is not UTF-8".into()))?,
        );
    }
    if frames_per_channel * n_channels != cols {
        return Err(Error::MalformedHeader("cols != frames x channels".into()));
    }
    let payload = take(rows * cols * 4).map_err(|_| Error::SampleCountMismatch {
        expected: (rows * cols) as u64,
        found: ((bytes.len().saturating_sub(*pos)) / 4) as u64,
    })?;
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(FeatureImage {
        rows,
        cols,
        frames_per_channel,
        channels,
        values,
    })
}

pub fn write_feature_image(img: &FeatureImage, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    encode_feature_image(img, &mut out);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_feature_image(path: &Path) -> Result<FeatureImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0;
    decode_feature_image(&bytes, &mut pos)
}

pub fn write_feature_csv(img: &FeatureImage, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in 0..img.rows {
        let line: Vec<String> = img.values[r * img.cols..(r + 1) * img.cols]
            .iter()
            .map(|v| v.to_string())
            .collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
