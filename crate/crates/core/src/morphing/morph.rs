use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::rasterize_mask;
use super::warp::{quantize, warp_affine};
use crate::error::{Error, Result};
use crate::geometry::{delaunay, signed_area, solve_affine, LandmarkSequence, Point, TriangleMesh, DEGENERATE_AREA};

/// Equal-sized RGB frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<RgbImage>,
}

impl FrameSequence {
    pub fn new(frames: Vec<RgbImage>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::invalid("frame sequence is empty"));
        };
        let dims = first.dimensions();
        if dims.0 == 0 || dims.1 == 0 {
            return Err(Error::invalid("frames have zero size"));
        }
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.dimensions() != dims) {
            return Err(Error::SequenceMismatch(format!(
                "frame {i} is {:?}, frame 0 is {dims:?}",
                f.dimensions()
            )));
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)`.
    pub fn dimensions(&self) -> (u32, u32) {
        self.frames[0].dimensions()
    }

    pub fn frames(&self) -> &[RgbImage] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<RgbImage> {
        self.frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphOptions {
    #[serde(default)]
    pub anti_alias: bool,
}

/// Triangulates the mean configuration of `seq`.
pub fn face_mesh(seq: &LandmarkSequence) -> Result<TriangleMesh> {
    delaunay(&seq.mean_frame())
}

/// Re-renders `src` so that the landmarks at `src_pts` move to `dst_pts`.
///
/// Triangles are pasted in mesh order, later ones overwriting earlier ones;
/// pixels outside every destination triangle keep their source values.
pub fn morph_frame(
    src: &RgbImage,
    src_pts: &[Point],
    dst_pts: &[Point],
    mesh: &TriangleMesh,
    opts: MorphOptions,
) -> Result<RgbImage> {
    if src_pts.len() != mesh.num_points() || dst_pts.len() != mesh.num_points() {
        return Err(Error::SequenceMismatch(format!(
            "mesh has {} points, got {} source and {} target",
            mesh.num_points(),
            src_pts.len(),
            dst_pts.len()
        )));
    }
    let (w, h) = (src.width() as usize, src.height() as usize);
    let mut out = src.clone();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let s = tri.map(|i| src_pts[i]);
        let d = tri.map(|i| dst_pts[i]);
        if signed_area(s[0], s[1], s[2]).abs() <= DEGENERATE_AREA
            || signed_area(d[0], d[1], d[2]).abs() <= DEGENERATE_AREA
        {
            log::warn!("skipping degenerate triangle {t} {tri:?}");
            continue;
        }
        let transform = solve_affine(&s, &d)?;
        let mask = rasterize_mask(&d, h, w, opts.anti_alias);
        if mask.rect.is_empty() {
            continue;
        }
        let warped = match warp_affine(src, &transform, mask.rect) {
            Ok(p) => p,
            Err(Error::SingularGeometry(reason)) => {
                log::warn!("skipping triangle {t}: {reason}");
                continue;
            }
            Err(e) => return Err(e),
        };
        for (x, y, m) in mask.pixels() {
            let px = out.get_pixel_mut(x as u32, y as u32);
            let w = warped.at(x, y);
            if m >= 1.0 {
                px.0 = w.map(quantize);
            } else {
                for c in 0..3 {
                    px.0[c] = quantize(px.0[c] as f32 * (1.0 - m) + w[c] * m);
                }
            }
        }
    }
    Ok(out)
}

/// Morphs every frame independently; the result does not depend on how
/// rayon schedules the frames.
pub fn morph_sequence(
    frames: &FrameSequence,
    src: &LandmarkSequence,
    dst: &LandmarkSequence,
    mesh: &TriangleMesh,
    opts: MorphOptions,
) -> Result<FrameSequence> {
    if frames.len() != src.len() || src.len() != dst.len() {
        return Err(Error::SequenceMismatch(format!(
            "{} frames, {} source landmark frames, {} target landmark frames",
            frames.len(),
            src.len(),
            dst.len()
        )));
    }
    if src.num_points() != dst.num_points() {
        return Err(Error::SequenceMismatch(format!(
            "{} source landmarks vs {} target landmarks",
            src.num_points(),
            dst.num_points()
        )));
    }
    let out = frames
        .frames()
        .par_iter()
        .enumerate()
        .map(|(i, f)| morph_frame(f, src.frame(i), dst.frame(i), mesh, opts))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn textured(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 13 + y * 7) as u8, (x ^ y) as u8 * 3, ((x * y) % 251) as u8]))
    }

    #[test]
    fn single_triangle_integer_translation() {
        let img = textured(40, 40);
        let mesh = TriangleMesh::from_triangles(3, vec![[0, 1, 2]]).unwrap();
        let s = [[5.0, 5.0], [25.0, 6.0], [8.0, 24.0]];
        let d = s.map(|p| [p[0] + 4.0, p[1] + 2.0]);
        let out = morph_frame(&img, &s, &d, &mesh, MorphOptions::default()).unwrap();
        let mask = rasterize_mask(&d, 40, 40, false);
        assert!(mask.covered_pixels() > 100);
        for (x, y, _) in mask.pixels() {
            assert_eq!(out.get_pixel(x as u32, y as u32), img.get_pixel(x as u32 - 4, y as u32 - 2));
        }
        for y in 0..40 {
            for x in 0..40 {
                if mask.at(x, y) == 0.0 {
                    assert_eq!(out.get_pixel(x as u32, y as u32), img.get_pixel(x as u32, y as u32));
                }
            }
        }
    }

    #[test]
    fn degenerate_target_triangle_is_skipped() {
        let img = textured(16, 16);
        let mesh = TriangleMesh::from_triangles(3, vec![[0, 1, 2]]).unwrap();
        let s = [[1.0, 1.0], [10.0, 1.0], [1.0, 10.0]];
        let d = [[1.0, 1.0], [5.0, 5.0], [9.0, 9.0]];
        assert_eq!(morph_frame(&img, &s, &d, &mesh, MorphOptions::default()).unwrap(), img);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let frames = FrameSequence::new(vec![textured(8, 8); 2]).unwrap();
        let a = LandmarkSequence::constant(crate::geometry::LandmarkScheme::Multipie68, &[[1.0, 1.0]; 68], 3).unwrap();
        let mesh = TriangleMesh::from_triangles(68, vec![]).unwrap();
        let err = morph_sequence(&frames, &a, &a, &mesh, MorphOptions::default()).unwrap_err();
        assert_eq!(err.kind(), "sequence-mismatch");
        assert!(FrameSequence::new(vec![textured(8, 8), textured(8, 9)]).is_err());
    }
}
