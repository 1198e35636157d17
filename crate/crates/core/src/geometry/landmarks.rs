//! Landmark sequences and the 68-point Multi-PIE layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2D point, `[x, y]` with y pointing down.
pub type Point = [f64; 2];

/// Number of landmarks in the Multi-PIE layout.
pub const N_LANDMARKS: usize = 68;

/// Index of the nose tip in the 68-point layout.
pub const NOSE_TIP: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LandmarkScheme {
    #[default]
    Multipie68,
}

impl LandmarkScheme {
    pub fn num_points(self) -> usize {
        match self {
            LandmarkScheme::Multipie68 => N_LANDMARKS,
        }
    }

    pub fn nose_tip(self) -> usize {
        match self {
            LandmarkScheme::Multipie68 => NOSE_TIP,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            LandmarkScheme::Multipie68 => "multipie68",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "multipie68" => Ok(LandmarkScheme::Multipie68),
            other => Err(Error::invalid(format!("unknown landmark scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceRegion {
    LeftEyebrow,
    RightEyebrow,
    LeftEye,
    RightEye,
    Nose,
    Mouth,
    Jawline,
}

impl FaceRegion {
    pub const ALL: [FaceRegion; 7] = [
        FaceRegion::Jawline,
        FaceRegion::RightEyebrow,
        FaceRegion::LeftEyebrow,
        FaceRegion::Nose,
        FaceRegion::RightEye,
        FaceRegion::LeftEye,
        FaceRegion::Mouth,
    ];

    /// Regions eligible for perturbation. The jawline is never among them.
    pub const INNER: [FaceRegion; 6] = [
        FaceRegion::RightEyebrow,
        FaceRegion::LeftEyebrow,
        FaceRegion::Nose,
        FaceRegion::RightEye,
        FaceRegion::LeftEye,
        FaceRegion::Mouth,
    ];

    /// Landmark indices in the 68-point layout. "Left" and "right" are the
    /// subject's, so the right eye is the one at image-left.
    pub fn indices(self) -> std::ops::Range<usize> {
        match self {
            FaceRegion::Jawline => 0..17,
            FaceRegion::RightEyebrow => 17..22,
            FaceRegion::LeftEyebrow => 22..27,
            FaceRegion::Nose => 27..36,
            FaceRegion::RightEye => 36..42,
            FaceRegion::LeftEye => 42..48,
            FaceRegion::Mouth => 48..68,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FaceRegion::LeftEyebrow => "left_eyebrow",
            FaceRegion::RightEyebrow => "right_eyebrow",
            FaceRegion::LeftEye => "left_eye",
            FaceRegion::RightEye => "right_eye",
            FaceRegion::Nose => "nose",
            FaceRegion::Mouth => "mouth",
            FaceRegion::Jawline => "jawline",
        }
    }

    pub fn is_inner(self) -> bool {
        self != FaceRegion::Jawline
    }

    /// Region containing landmark `index`, if any.
    pub fn of_landmark(index: usize) -> Option<FaceRegion> {
        FaceRegion::ALL
            .into_iter()
            .find(|r| r.indices().contains(&index))
    }
}

/// Region groups sampled as a unit: both eyebrows together, both eyes
/// together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerRegion {
    Eyebrows,
    Eyes,
    Nose,
    Mouth,
}

impl InnerRegion {
    pub const ALL: [InnerRegion; 4] = [
        InnerRegion::Eyebrows,
        InnerRegion::Eyes,
        InnerRegion::Nose,
        InnerRegion::Mouth,
    ];

    pub fn regions(self) -> &'static [FaceRegion] {
        match self {
            InnerRegion::Eyebrows => &[FaceRegion::RightEyebrow, FaceRegion::LeftEyebrow],
            InnerRegion::Eyes => &[FaceRegion::RightEye, FaceRegion::LeftEye],
            InnerRegion::Nose => &[FaceRegion::Nose],
            InnerRegion::Mouth => &[FaceRegion::Mouth],
        }
    }

    pub fn indices(self) -> impl Iterator<Item = usize> {
        self.regions().iter().flat_map(|r| r.indices())
    }

    pub fn name(self) -> &'static str {
        match self {
            InnerRegion::Eyebrows => "eyebrows",
            InnerRegion::Eyes => "eyes",
            InnerRegion::Nose => "nose",
            InnerRegion::Mouth => "mouth",
        }
    }
}

/// Eye and mouth landmarks: the non-rigid set used for guided sampling
/// and for the heavier reconstruction weights.
pub fn nonrigid_indices() -> impl Iterator<Item = usize> {
    FaceRegion::RightEye
        .indices()
        .chain(FaceRegion::LeftEye.indices())
        .chain(FaceRegion::Mouth.indices())
}

/// A clip of `T` frames of `N` 2D landmarks.
///
/// Coordinates are stored frame-major. Under alignment they are normalized to
/// the face crop, but the type itself also carries pixel-space sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSequence {
    frames: usize,
    points_per_frame: usize,
    scheme: LandmarkScheme,
    points: Vec<Point>,
}

impl LandmarkSequence {
    /// Builds a sequence from per-frame point lists. Requires at least one
    /// frame, a consistent point count and finite coordinates.
    pub fn from_frames(scheme: LandmarkScheme, frames: Vec<Vec<Point>>) -> Result<Self> {
        let n = frames.first().map(Vec::len).unwrap_or(0);
        if frames.is_empty() || n == 0 {
            return Err(Error::invalid("landmark sequence is empty"));
        }
        if let Some((t, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != n) {
            return Err(Error::invalid(format!(
                "frame {t} has {} landmarks, expected {n}",
                f.len()
            )));
        }
        let points: Vec<Point> = frames.into_iter().flatten().collect();
        Self::from_flat(scheme, points.len() / n, n, points)
    }

    pub fn from_flat(
        scheme: LandmarkScheme,
        frames: usize,
        points_per_frame: usize,
        points: Vec<Point>,
    ) -> Result<Self> {
        if frames == 0 || points_per_frame == 0 {
            return Err(Error::invalid("landmark sequence is empty"));
        }
        if points.len() != frames * points_per_frame {
            return Err(Error::invalid(format!(
                "expected {} points for {frames}x{points_per_frame}, got {}",
                frames * points_per_frame,
                points.len()
            )));
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::invalid(format!(
                "non-finite coordinate at frame {} landmark {}",
                i / points_per_frame,
                i % points_per_frame
            )));
        }
        Ok(Self {
            frames,
            points_per_frame,
            scheme,
            points,
        })
    }

    /// Sequence with `frames` copies of one configuration.
    pub fn constant(scheme: LandmarkScheme, frame: &[Point], frames: usize) -> Result<Self> {
        Self::from_frames(scheme, vec![frame.to_vec(); frames])
    }

    pub fn len(&self) -> usize {
        self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn num_points(&self) -> usize {
        self.points_per_frame
    }

    pub fn scheme(&self) -> LandmarkScheme {
        self.scheme
    }

    pub fn frame(&self, t: usize) -> &[Point] {
        let n = self.points_per_frame;
        &self.points[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Point] {
        let n = self.points_per_frame;
        &mut self.points[t * n..(t + 1) * n]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[Point]> + '_ {
        self.points.chunks_exact(self.points_per_frame)
    }

    pub fn point(&self, t: usize, j: usize) -> Point {
        self.points[t * self.points_per_frame + j]
    }

    pub fn as_flat(&self) -> &[Point] {
        &self.points
    }

    pub fn same_shape(&self, other: &LandmarkSequence) -> bool {
        self.frames == other.frames && self.points_per_frame == other.points_per_frame
    }

    pub(crate) fn check_same_shape(&self, other: &LandmarkSequence, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: shape {}x{} does not match {}x{}",
                self.frames, self.points_per_frame, other.frames, other.points_per_frame
            )))
        }
    }

    /// Frames `start..start + len` as a new sequence.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames {
            return Err(Error::invalid(format!(
                "clip {start}..{} outside sequence of {} frames",
                start + len,
                self.frames
            )));
        }
        let n = self.points_per_frame;
        Ok(Self {
            frames: len,
            points_per_frame: n,
            scheme: self.scheme,
            points: self.points[start * n..(start + len) * n].to_vec(),
        })
    }

    /// Applies `f` to every point.
    pub fn map_points(&self, mut f: impl FnMut(usize, usize, Point) -> Point) -> Self {
        let n = self.points_per_frame;
        let points = self
            .points
            .iter()
            .enumerate()
            .map(|(i, &p)| f(i / n, i % n, p))
            .collect();
        Self {
            points,
            ..self.clone()
        }
    }

    /// Per-landmark average over time.
    pub fn mean_frame(&self) -> Vec<Point> {
        let mut acc = vec![[0.0; 2]; self.points_per_frame];
        for frame in self.frames() {
            for (a, p) in acc.iter_mut().zip(frame) {
                a[0] += p[0];
                a[1] += p[1];
            }
        }
        let inv = 1.0 / self.frames as f64;
        for a in &mut acc {
            a[0] *= inv;
            a[1] *= inv;
        }
        acc
    }

    /// Same frames in a different order; `order[i]` is the source frame of
    /// output frame `i`.
    pub fn reorder(&self, order: &[usize]) -> Result<Self> {
        if order.iter().any(|&i| i >= self.frames) {
            return Err(Error::invalid("frame order index out of range"));
        }
        let frames = order.iter().map(|&i| self.frame(i).to_vec()).collect();
        Self::from_frames(self.scheme, frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_index_sets_are_disjoint_and_cover_the_layout() {
        let mut seen = [false; N_LANDMARKS];
        for region in FaceRegion::ALL {
            for i in region.indices() {
                assert!(i < N_LANDMARKS);
                assert!(!seen[i], "index {i} in two regions");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn jawline_is_not_inner() {
        assert!(!FaceRegion::INNER.contains(&FaceRegion::Jawline));
        for group in InnerRegion::ALL {
            assert!(group.regions().iter().all(|r| r.is_inner()));
        }
    }

    #[test]
    fn rejects_non_finite_and_ragged_input() {
        let bad = vec![vec![[0.0, f64::NAN]]];
        assert!(LandmarkSequence::from_frames(LandmarkScheme::Multipie68, bad).is_err());
        let ragged = vec![vec![[0.0, 0.0]], vec![[0.0, 0.0], [1.0, 1.0]]];
        assert!(LandmarkSequence::from_frames(LandmarkScheme::Multipie68, ragged).is_err());
    }

    #[test]
    fn scheme_tag_round_trips() {
        let s = LandmarkScheme::Multipie68;
        assert_eq!(LandmarkScheme::from_tag(s.tag()).unwrap(), s);
        assert!(LandmarkScheme::from_tag("dlib5").is_err());
    }
}
