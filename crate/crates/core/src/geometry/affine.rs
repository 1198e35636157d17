use serde::{Deserialize, Serialize};

use super::landmarks::Point;
use crate::error::{Error, Result};

/// Triangles with |signed area| at or below this are degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Signed area, positive when `a, b, c` wind counter-clockwise in a y-up
/// frame (clockwise on screen).
pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// 2x3 matrix mapping `(x, y, 1)` to `(x', y')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform2D {
    pub matrix: [[f64; 3]; 2],
}

impl AffineTransform2D {
    pub const IDENTITY: AffineTransform2D = AffineTransform2D {
        matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            matrix: [[1.0, 0.0, dx], [0.0, 1.0, dy]],
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        let m = &self.matrix;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2],
        ]
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        if !det.is_finite() || det.abs() <= DEGENERATE_AREA {
            return Err(Error::SingularGeometry(format!(
                "affine transform is not invertible (det = {det:e})"
            )));
        }
        let [[a, b, c], [d, e, f]] = self.matrix;
        let inv = 1.0 / det;
        let (ia, ib, id, ie) = (e * inv, -b * inv, -d * inv, a * inv);
        Ok(Self {
            matrix: [
                [ia, ib, -(ia * c + ib * f)],
                [id, ie, -(id * c + ie * f)],
            ],
        })
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &AffineTransform2D) -> Self {
        let a = &next.matrix;
        let b = &self.matrix;
        let mut out = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            out[r][2] += a[r][2];
        }
        Self { matrix: out }
    }
}

/// Affine map taking each `src[i]` to `dst[i]`.
pub fn solve_affine(src: &[Point; 3], dst: &[Point; 3]) -> Result<AffineTransform2D> {
    let area = signed_area(src[0], src[1], src[2]);
    if !area.is_finite() || area.abs() <= DEGENERATE_AREA {
        return Err(Error::SingularGeometry(format!(
            "source triangle is degenerate (area = {area:e})"
        )));
    }
    let e1 = [src[1][0] - src[0][0], src[1][1] - src[0][1]];
    let e2 = [src[2][0] - src[0][0], src[2][1] - src[0][1]];
    let f1 = [dst[1][0] - dst[0][0], dst[1][1] - dst[0][1]];
    let f2 = [dst[2][0] - dst[0][0], dst[2][1] - dst[0][1]];
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    // Linear part A solves A [e1 e2] = [f1 f2].
    let mut matrix = [[0.0; 3]; 2];
    for r in 0..2 {
        let a = (f1[r] * e2[1] - f2[r] * e1[1]) / det;
        let b = (f2[r] * e1[0] - f1[r] * e2[0]) / det;
        matrix[r] = [a, b, dst[0][r] - a * src[0][0] - b * src[0][1]];
    }
    Ok(AffineTransform2D { matrix })
}
