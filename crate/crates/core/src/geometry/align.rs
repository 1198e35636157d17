//! Nose-tip alignment into crop-normalized coordinates.

use serde::{Deserialize, Serialize};

use super::landmarks::{LandmarkSequence, Point};
use crate::error::{Error, Result};

/// Axis-aligned face crop in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl CropBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn center(&self) -> Point {
        [self.x + 0.5 * self.width, self.y + 0.5 * self.height]
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.width, self.height]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

/// Per-frame map between pixel and normalized coordinates:
/// `normalized = (pixel - origin) / size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameAlignment {
    pub origin: Point,
    pub size: [f64; 2],
}

impl FrameAlignment {
    pub fn normalize(&self, p: Point) -> Point {
        [
            (p[0] - self.origin[0]) / self.size[0],
            (p[1] - self.origin[1]) / self.size[1],
        ]
    }

    pub fn denormalize(&self, q: Point) -> Point {
        [
            q[0] * self.size[0] + self.origin[0],
            q[1] * self.size[1] + self.origin[1],
        ]
    }
}

/// A landmark sequence in normalized crop coordinates together with the
/// per-frame transforms that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSequence {
    pub sequence: LandmarkSequence,
    pub frames: Vec<FrameAlignment>,
    /// `(frame, landmark)` pairs that fell outside `[0, 1]^2` and were
    /// clamped.
    pub clamped: Vec<(usize, usize)>,
}

impl AlignedSequence {
    /// Maps a normalized sequence of the same length back to pixels.
    pub fn denormalize(&self, seq: &LandmarkSequence) -> Result<LandmarkSequence> {
        if seq.len() != self.frames.len() {
            return Err(Error::invalid(format!(
                "denormalize: {} frames vs {} alignments",
                seq.len(),
                self.frames.len()
            )));
        }
        Ok(seq.map_points(|t, _, q| self.frames[t].denormalize(q)))
    }

    pub fn pixel_sequence(&self) -> Result<LandmarkSequence> {
        self.denormalize(&self.sequence)
    }
}

/// Moves the nose tip of every frame onto its crop center and scales by the
/// crop size so the face lands in `[0, 1]^2`. Points outside that square are
/// clamped and reported.
pub fn align_sequence(seq: &LandmarkSequence, crops: &[CropBox]) -> Result<AlignedSequence> {
    if crops.len() != seq.len() {
        return Err(Error::invalid(format!(
            "{} crop boxes for {} frames",
            crops.len(),
            seq.len()
        )));
    }
    let nose = seq.scheme().nose_tip();
    if nose >= seq.num_points() {
        return Err(Error::invalid("sequence has no nose-tip landmark"));
    }
    let mut frames = Vec::with_capacity(crops.len());
    for (t, c) in crops.iter().enumerate() {
        if !(c.width.is_finite() && c.height.is_finite()) || c.width <= 0.0 || c.height <= 0.0 {
            return Err(Error::invalid(format!("crop box {t} has zero area")));
        }
        let tip = seq.point(t, nose);
        // Translating by (center - tip) and then subtracting the crop corner
        // is the same as subtracting (tip - size/2).
        frames.push(FrameAlignment {
            origin: [tip[0] - 0.5 * c.width, tip[1] - 0.5 * c.height],
            size: [c.width, c.height],
        });
    }
    let mut clamped = Vec::new();
    let sequence = seq.map_points(|t, j, p| {
        let q = frames[t].normalize(p);
        let r = [q[0].clamp(0.0, 1.0), q[1].clamp(0.0, 1.0)];
        if r != q {
            clamped.push((t, j));
        }
        r
    });
    if !clamped.is_empty() {
        log::warn!(
            "alignment clamped {} landmark coordinates into [0, 1]",
            clamped.len()
        );
    }
    Ok(AlignedSequence {
        sequence,
        frames,
        clamped,
    })
}
