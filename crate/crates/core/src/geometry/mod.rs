//! Landmark data model, motion algebra, alignment and triangle geometry.

pub mod affine;
pub mod align;
pub mod delaunay;
pub mod landmarks;
pub mod motion;

pub use affine::{signed_area, solve_affine, AffineTransform2D, DEGENERATE_AREA};
pub use align::{align_sequence, AlignedSequence, CropBox, FrameAlignment};
pub use delaunay::{convex_hull, delaunay, TriangleMesh};
pub use landmarks::{
    nonrigid_indices, FaceRegion, InnerRegion, LandmarkScheme, LandmarkSequence, Point,
    N_LANDMARKS, NOSE_TIP,
};
pub use motion::{artifact_l1, motion, temporal_artifacts, MotionField, TemporalArtifact};
