//! Versioned binary checkpoints of named tensors with a JSON config sidecar.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "LPNC" | u32 version | u32 tensor count
//! per tensor: u32 name length | name (UTF-8) | u8 dtype (0 = f64, 1 = f32)
//!             | u32 ndim | u64 dims[ndim] | row-major data
//! ```
//!
//! The sidecar at `<checkpoint>.json` holds `{"format_version", "config"}`.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::LpnConfig;
use super::model::LpnModel;
use crate::error::{Error, Result};
use crate::io::atomic::{read_bytes, write_atomic, write_json_atomic};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LPNC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F64,
    F32,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    config: LpnConfig,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode_checkpoint(model: &LpnModel, dtype: DType) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.parameters().len() as u32).to_le_bytes());
    for (name, value) in model.parameter_names().iter().zip(model.parameters()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(match dtype {
            DType::F64 => 0,
            DType::F32 => 1,
        });
        out.extend_from_slice(&2u32.to_le_bytes());
        for dim in [value.nrows(), value.ncols()] {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for v in value.iter() {
            match dtype {
                DType::F64 => out.extend_from_slice(&v.to_le_bytes()),
                DType::F32 => out.extend_from_slice(&(*v as f32).to_le_bytes()),
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptCheckpoint("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses checkpoint bytes into named tensors.
pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Array2<f64>)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CorruptCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::CorruptCheckpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let dtype = match r.u8()? {
            0 => DType::F64,
            1 => DType::F32,
            other => return Err(Error::CorruptCheckpoint(format!("unknown dtype {other}"))),
        };
        let ndim = r.u32()? as usize;
        if ndim != 2 {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor {name} has {ndim} dims, expected 2"
            )));
        }
        let (rows, cols) = (r.u64()? as usize, r.u64()? as usize);
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::CorruptCheckpoint("tensor too large".into()))?;
        let width = match dtype {
            DType::F64 => 8,
            DType::F32 => 4,
        };
        let raw = r.take(n.checked_mul(width).ok_or_else(|| {
            Error::CorruptCheckpoint("tensor too large".into())
        })?)?;
        let data: Vec<f64> = match dtype {
            DType::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            DType::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        };
        let value = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        tensors.push((name, value));
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint("trailing bytes".into()));
    }
    Ok(tensors)
}

/// Writes the checkpoint and its sidecar, each atomically.
pub fn save_checkpoint(model: &LpnModel, path: &Path) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model, DType::F64))?;
    write_json_atomic(
        &sidecar_path(path),
        &Sidecar {
            format_version: CHECKPOINT_VERSION,
            config: model.config().clone(),
        },
    )
}

pub fn load_checkpoint(path: &Path) -> Result<LpnModel> {
    let side = sidecar_path(path);
    let sidecar: Sidecar = serde_json::from_slice(&read_bytes(&side)?)
        .map_err(|e| Error::CorruptCheckpoint(format!("{}: {e}", side.display())))?;
    let bytes = read_bytes(path)?;
    LpnModel::from_named(sidecar.config, decode_tensors(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LpnModel {
        let config = LpnConfig {
            k: 4,
            d: 8,
            t: 3,
            encoder_layers: 1,
            decoder_layers: 1,
            heads: 2,
            ff_dim: 8,
            ..Default::default()
        };
        LpnModel::new(config, 5).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.lpn");
        let model = tiny();
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.parameters(), model.parameters());
        assert_eq!(back.config(), model.config());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_checkpoint(&tiny(), DType::F64);
        assert!(decode_tensors(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tensors(&bad), Err(Error::CorruptCheckpoint(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_tensors(&extra).is_err());
    }

    #[test]
    fn f32_tensors_load() {
        let model = tiny();
        let tensors = decode_tensors(&encode_checkpoint(&model, DType::F32)).unwrap();
        let back = LpnModel::from_named(model.config().clone(), tensors).unwrap();
        let a = &model.parameters()[2];
        let b = &back.parameters()[2];
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6));
    }

    #[test]
    fn mismatched_config_is_rejected() {
        let tensors = decode_tensors(&encode_checkpoint(&tiny(), DType::F64)).unwrap();
        let mut config = tiny().config().clone();
        config.k = 5;
        assert!(LpnModel::from_named(config, tensors).is_err());
    }
}
