//! Inverse-mapped affine warping with bilinear sampling.

use image::{Rgb, RgbImage};

use super::raster::PixelRect;
use crate::error::{Error, Result};
use crate::geometry::{AffineTransform2D, DEGENERATE_AREA};

/// A warped region kept at f32 precision until it is composited.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedPatch {
    pub rect: PixelRect,
    data: Vec<[f32; 3]>,
}

impl WarpedPatch {
    pub fn at(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[(y - self.rect.y) * self.rect.width + (x - self.rect.x)]
    }

    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_fn(self.rect.width as u32, self.rect.height as u32, |x, y| {
            Rgb(self.data[y as usize * self.rect.width + x as usize].map(quantize))
        })
    }
}

/// Round half to even into `0..=255`.
pub fn quantize(v: f32) -> u8 {
    v.round_ties_even().clamp(0.0, 255.0) as u8
}

/// Bilinear sample with pixel centers at integer + 0.5; out-of-image taps
/// clamp to the nearest edge pixel.
pub fn sample_bilinear(image: &RgbImage, x: f64, y: f64) -> [f32; 3] {
    let (w, h) = (image.width() as i64, image.height() as i64);
    let u = x - 0.5;
    let v = y - 0.5;
    let fx0 = u.floor();
    let fy0 = v.floor();
    let fx = (u - fx0) as f32;
    let fy = (v - fy0) as f32;
    let cx = |i: i64| i.clamp(0, w - 1) as u32;
    let cy = |i: i64| i.clamp(0, h - 1) as u32;
    let (x0, y0) = (fx0 as i64, fy0 as i64);
    let p00 = image.get_pixel(cx(x0), cy(y0)).0;
    let p10 = image.get_pixel(cx(x0 + 1), cy(y0)).0;
    let p01 = image.get_pixel(cx(x0), cy(y0 + 1)).0;
    let p11 = image.get_pixel(cx(x0 + 1), cy(y0 + 1)).0;
    std::array::from_fn(|c| {
        let top = (1.0 - fx) * p00[c] as f32 + fx * p10[c] as f32;
        let bottom = (1.0 - fx) * p01[c] as f32 + fx * p11[c] as f32;
        (1.0 - fy) * top + fy * bottom
    })
}

/// Renders `roi` of the destination plane, where `transform` maps source
/// pixel coordinates to destination ones.
pub fn warp_affine(image: &RgbImage, transform: &AffineTransform2D, roi: PixelRect) -> Result<WarpedPatch> {
    if transform.determinant().abs() <= DEGENERATE_AREA {
        return Err(Error::SingularGeometry(format!(
            "affine determinant {:e}",
            transform.determinant()
        )));
    }
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::invalid("cannot sample an empty image"));
    }
    let inv = transform.inverse()?;
    let mut data = Vec::with_capacity(roi.width * roi.height);
    for y in roi.y..roi.y + roi.height {
        for x in roi.x..roi.x + roi.width {
            let s = inv.apply([x as f64 + 0.5, y as f64 + 0.5]);
            data.push(sample_bilinear(image, s[0], s[1]));
        }
    }
    Ok(WarpedPatch { rect: roi, data })
}
