//! Versioned binary container for trained models.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PSMF"
//! 4       2     format version (1)
//! 6       1     model kind: 0 = cnn, 1 = logistic, 2 = svm
//! 7       1     scalar width in bytes: 4 = f32, 8 = f64
//! 8       4     header length H
//! 12      H     UTF-8 JSON header (configuration, shapes, vocabulary fingerprint)
//! 12+H    8     parameter count N
//! 20+H    N*w   parameters, IEEE-754 little-endian
//! ```
//!
//! Parameters are written bit-for-bit, so a model read back compares equal
//! to the one written.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"PSMF";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelKind {
    Cnn = 0,
    Logistic = 1,
    Svm = 2,
}

impl ModelKind {
    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(ModelKind::Cnn),
            1 => Ok(ModelKind::Logistic),
            2 => Ok(ModelKind::Svm),
            t => Err(Error::ModelFormat(format!("unknown model kind tag {t}"))),
        }
    }
}

pub fn encode<T: Real, H: Serialize>(kind: ModelKind, header: &H, params: &[T]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + params.len() * T::WIDTH as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind as u8);
    out.push(T::WIDTH);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &p in params {
        p.write_le(&mut out);
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::ModelFormat("truncated model file".into()))?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

pub fn decode<T: Real, H: DeserializeOwned>(
    bytes: &[u8],
    expected: ModelKind,
) -> Result<(H, Vec<T>)> {
    let mut at = 0;
    if take(bytes, &mut at, 4)? != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = u16::from_le_bytes(take(bytes, &mut at, 2)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {version}"
        )));
    }
    let kind = ModelKind::from_tag(take(bytes, &mut at, 1)?[0])?;
    if kind != expected {
        return Err(Error::ModelFormat(format!(
            "expected {expected:?} model, found {kind:?}"
        )));
    }
    let width = take(bytes, &mut at, 1)?[0];
    if width != T::WIDTH {
        return Err(Error::ModelFormat(format!(
            "scalar width {width} does not match requested width {}",
            T::WIDTH
        )));
    }
    let hlen = u32::from_le_bytes(take(bytes, &mut at, 4)?.try_into().unwrap()) as usize;
    let header: H = serde_json::from_slice(take(bytes, &mut at, hlen)?)
        .map_err(|e| Error::ModelFormat(format!("header: {e}")))?;
    let n = u64::from_le_bytes(take(bytes, &mut at, 8)?.try_into().unwrap()) as usize;
    let w = T::WIDTH as usize;
    let body = take(
        bytes,
        &mut at,
        n.checked_mul(w)
            .ok_or_else(|| Error::ModelFormat("parameter count overflow".into()))?,
    )?;
    if at != bytes.len() {
        return Err(Error::ModelFormat("trailing bytes after parameters".into()));
    }
    let params = body.chunks_exact(w).map(T::read_le).collect();
    Ok((header, params))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_kind_width_and_truncation() {
        let bytes = encode(ModelKind::Svm, &"hdr", &[1.5f64, -0.0]).unwrap();
        let (h, p): (String, Vec<f64>) = decode(&bytes, ModelKind::Svm).unwrap();
        assert_eq!(h, "hdr");
        assert_eq!(p[1].to_bits(), (-0.0f64).to_bits());
        assert!(decode::<f64, String>(&bytes, ModelKind::Cnn).is_err());
        assert!(decode::<f32, String>(&bytes, ModelKind::Svm).is_err());
        assert!(decode::<f64, String>(&bytes[..bytes.len() - 1], ModelKind::Svm).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode::<f64, String>(&bad, ModelKind::Svm).is_err());
    }
}
