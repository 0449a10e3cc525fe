//! Model files.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! 0   8   magic  b"EMGTMODL"
//! 8   2   u16    version (1)
//! 10  1   u8     architecture (0 reference_cnn, 1 linear_baseline)
//! 11  1   u8     flags (bit 0 per-image z-score, bit 1 trained)
//! 12  4   u32    mel rows of the training images (0 if untrained)
//! 16  4   u32    channels of the training images (0 if untrained)
//! 20  8   u64    P parameter count
//! 28  8   u64    A auxiliary value count
//! 36      P x f64 parameters, then A x f64 auxiliary values
//! ```

use std::path::Path;

use super::{Architecture, Classifier, LinearBaseline, ReferenceCnn};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"EMGTMODL";
pub const MODEL_VERSION: u16 = 1;

pub fn save_model(model: &dyn Classifier) -> Vec<u8> {
    let params = model.params();
    let aux = model.aux();
    let mut out = Vec::with_capacity(36 + 8 * (params.len() + aux.len()));
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(match model.architecture() {
        Architecture::ReferenceCnn => 0,
        Architecture::LinearBaseline => 1,
    });
    let shape = model.input_shape();
    out.push(u8::from(model.standardize()) | (u8::from(shape.is_some()) << 1));
    let (rows, channels) = shape.unwrap_or((0, 0));
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(channels as u32).to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    out.extend_from_slice(&(aux.len() as u64).to_le_bytes());
    for v in params.iter().chain(&aux) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn load_model(bytes: &[u8]) -> Result<Box<dyn Classifier>> {
    let header = bytes
        .get(..36)
        .ok_or_else(|| Error::MalformedHeader("model file truncated".into()))?;
    if &header[..8] != MODEL_MAGIC {
        return Err(Error::MalformedHeader("missing model magic".into()));
    }
    let version = u16::from_le_bytes([header[8], header[9]]);
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: MODEL_VERSION,
        });
    }
    let arch = header[10];
    let flags = header[11];
    let rows = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let channels = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
    let n_params = u64::from_le_bytes(header[20..28].try_into().unwrap()) as usize;
    let n_aux = u64::from_le_bytes(header[28..36].try_into().unwrap()) as usize;
    let expected = n_params
        .checked_add(n_aux)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::MalformedHeader("model sizes overflow".into()))?;
    let payload = &bytes[36..];
    if payload.len() != expected {
        return Err(Error::SampleCountMismatch {
            expected: (n_params + n_aux) as u64,
            found: (payload.len() / 8) as u64,
        });
    }
    let mut values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let aux = values.split_off(n_params);
    let standardize = flags & 1 != 0;
    let shape = (flags & 2 != 0).then_some((rows, channels));
    match arch {
        0 => Ok(Box::new(ReferenceCnn::from_parts(standardize, shape, values)?)),
        1 => Ok(Box::new(LinearBaseline::from_parts(standardize, shape, aux, values)?)),
        other => Err(Error::MalformedHeader(format!("unknown architecture tag {other}"))),
    }
}

pub fn write_model(model: &dyn Classifier, path: &Path) -> Result<()> {
    std::fs::write(path, save_model(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<Box<dyn Classifier>> {
    load_model(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
