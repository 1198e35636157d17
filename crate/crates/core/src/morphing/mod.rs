//! Piecewise-affine re-rendering of frames onto new landmark positions.

pub mod morph;
pub mod raster;
pub mod warp;

pub use morph::{face_mesh, morph_frame, morph_sequence, FrameSequence, MorphOptions};
pub use raster::{rasterize_mask, PixelRect, TriangleMask};
pub use warp::{quantize, sample_bilinear, warp_affine, WarpedPatch};
