//! Landmark files in pixel coordinates: a JSON document and a packed
//! little-endian binary variant.
//!
//! JSON: `{"fps", "scheme", "crops": [[x, y, w, h], ...],
//! "frames": [[[x, y] x N], ...], "provenance"?}`.
//!
//! Binary: `"KIMO" | u32 version | u32 T | u32 N | f32 fps | u8 scheme
//! | f32 crops[T][4] | f32 points[T][N][2] | u32 provenance length
//! | provenance JSON`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::atomic::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::geometry::{align_sequence, AlignedSequence, CropBox, LandmarkScheme, LandmarkSequence, Point};

pub const BINARY_MAGIC: &[u8; 4] = b"KIMO";
pub const BINARY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    #[default]
    Json,
    Bin,
}

impl FileFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FileFormat::Json => "json",
            FileFormat::Bin => "kimo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFile {
    pub fps: f64,
    pub crops: Vec<CropBox>,
    /// Pixel-space landmarks.
    pub frames: LandmarkSequence,
    pub provenance: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct JsonDoc {
    fps: f64,
    scheme: String,
    crops: Vec<[f64; 4]>,
    frames: Vec<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

impl LandmarkFile {
    pub fn new(fps: f64, crops: Vec<CropBox>, frames: LandmarkSequence) -> Result<Self> {
        if crops.len() != frames.len() {
            return Err(Error::invalid(format!(
                "{} crops for {} frames",
                crops.len(),
                frames.len()
            )));
        }
        Ok(Self {
            fps,
            crops,
            frames,
            provenance: None,
        })
    }

    /// Frames `[start, start + len)` with their crops; provenance is dropped.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        let frames = self.frames.slice(start, len)?;
        Self::new(self.fps, self.crops[start..start + len].to_vec(), frames)
    }

    pub fn scheme(&self) -> LandmarkScheme {
        self.frames.scheme()
    }

    /// Nose-aligned, crop-normalized view of the landmarks.
    pub fn align(&self) -> Result<AlignedSequence> {
        align_sequence(&self.frames, &self.crops)
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let doc = JsonDoc {
            fps: self.fps,
            scheme: self.scheme().tag().to_string(),
            crops: self.crops.iter().map(|c| c.to_array()).collect(),
            frames: self.frames.frames().map(<[Point]>::to_vec).collect(),
            provenance: self.provenance.clone(),
        };
        let mut bytes = serde_json::to_vec(&doc).expect("landmark document serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_json_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let doc: JsonDoc =
            serde_json::from_slice(bytes).map_err(|e| Error::format(path, e.to_string()))?;
        let scheme = LandmarkScheme::from_tag(&doc.scheme)?;
        let frames = LandmarkSequence::from_frames(scheme, doc.frames)?;
        if frames.num_points() != scheme.num_points() {
            return Err(Error::format(
                path,
                format!(
                    "{} landmarks per frame, scheme {} has {}",
                    frames.num_points(),
                    scheme.tag(),
                    scheme.num_points()
                ),
            ));
        }
        let mut file = Self::new(
            doc.fps,
            doc.crops.into_iter().map(CropBox::from_array).collect(),
            frames,
        )?;
        file.provenance = doc.provenance;
        Ok(file)
    }

    pub fn to_bin_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.frames.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.frames.num_points() as u32).to_le_bytes());
        out.extend_from_slice(&(self.fps as f32).to_le_bytes());
        out.push(match self.scheme() {
            LandmarkScheme::Multipie68 => 0,
        });
        for c in &self.crops {
            for v in c.to_array() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        for p in self.frames.as_flat() {
            out.extend_from_slice(&(p[0] as f32).to_le_bytes());
            out.extend_from_slice(&(p[1] as f32).to_le_bytes());
        }
        let prov = self
            .provenance
            .as_ref()
            .map(|v| serde_json::to_vec(v).expect("provenance serializes"))
            .unwrap_or_default();
        out.extend_from_slice(&(prov.len() as u32).to_le_bytes());
        out.extend_from_slice(&prov);
        out
    }

    pub fn from_bin_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(path, m.to_string());
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated"))?;
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(4)? != BINARY_MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
        let f32_at = |s: &[u8]| f32::from_le_bytes(s.try_into().unwrap()) as f64;
        let version = u32_at(take(4)?);
        if version != BINARY_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let t = u32_at(take(4)?) as usize;
        let n = u32_at(take(4)?) as usize;
        let fps = f32_at(take(4)?);
        let scheme = match take(1)?[0] {
            0 => LandmarkScheme::Multipie68,
            other => return Err(bad(&format!("unknown scheme code {other}"))),
        };
        if n != scheme.num_points() {
            return Err(bad("landmark count does not match scheme"));
        }
        let crops_raw = take(t.checked_mul(16).ok_or_else(|| bad("too large"))?)?;
        let crops = crops_raw
            .chunks_exact(16)
            .map(|c| {
                CropBox::from_array(std::array::from_fn(|i| f32_at(&c[4 * i..4 * i + 4])))
            })
            .collect();
        let pts_raw = take(
            t.checked_mul(n)
                .and_then(|v| v.checked_mul(8))
                .ok_or_else(|| bad("too large"))?,
        )?;
        let points = pts_raw
            .chunks_exact(8)
            .map(|c| [f32_at(&c[..4]), f32_at(&c[4..])])
            .collect();
        let plen = u32_at(take(4)?) as usize;
        let prov = take(plen)?;
        let provenance = if plen == 0 {
            None
        } else {
            Some(serde_json::from_slice(prov).map_err(|e| bad(&e.to_string()))?)
        };
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let mut file = Self::new(fps, crops, LandmarkSequence::from_flat(scheme, t, n, points)?)?;
        file.provenance = provenance;
        Ok(file)
    }

    /// Reads either format, sniffing the binary magic.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        if bytes.starts_with(BINARY_MAGIC) {
            Self::from_bin_bytes(&bytes, path)
        } else {
            Self::from_json_bytes(&bytes, path)
        }
    }

    pub fn save(&self, path: &Path, format: FileFormat) -> Result<()> {
        match format {
            FileFormat::Json => write_atomic(path, &self.to_json_bytes()),
            FileFormat::Bin => write_atomic(path, &self.to_bin_bytes()),
        }
    }
}
