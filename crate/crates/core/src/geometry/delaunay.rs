//! Delaunay triangulation over landmark indices.
//!
//! Points are inserted in lexicographic order, each new point is fanned to
//! the hull edges it sees, and Lawson edge flips then restore the
//! empty-circumcircle property. Co-circular configurations keep whatever
//! diagonal the lexicographic sweep produced, which makes the output a
//! deterministic function of the input.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::affine::{signed_area, DEGENERATE_AREA};
use super::landmarks::Point;
use crate::error::{Error, Result};

/// Minimum separation between distinct input points.
pub const MIN_POINT_DISTANCE: f64 = 1e-9;

/// Incircle determinant threshold (in bounding-box-normalized units) above
/// which an edge is flipped.
const INCIRCLE_EPS: f64 = 1e-12;

/// Landmark-index triplets, each wound so that `signed_area > 0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriangleMesh {
    num_points: usize,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Wraps a precomputed triangle list after checking index ranges.
    pub fn from_triangles(num_points: usize, triangles: Vec<[usize; 3]>) -> Result<Self> {
        for t in &triangles {
            if t.iter().any(|&i| i >= num_points) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2]
            {
                return Err(Error::invalid(format!("invalid triangle {t:?}")));
            }
        }
        Ok(Self {
            num_points,
            triangles,
        })
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn vertices(&self, tri: usize, points: &[Point]) -> [Point; 3] {
        self.triangles[tri].map(|i| points[i])
    }

    /// Sum of absolute triangle areas under `points`.
    pub fn total_area(&self, points: &[Point]) -> f64 {
        self.triangles
            .iter()
            .map(|t| signed_area(points[t[0]], points[t[1]], points[t[2]]).abs())
            .sum()
    }
}

/// Delaunay triangulation of `points`.
pub fn delaunay(points: &[Point]) -> Result<TriangleMesh> {
    let n = points.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "triangulation needs at least 3 points, got {n}"
        )));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::invalid("non-finite point"));
    }
    for i in 0..n {
        for j in i + 1..n {
            let (dx, dy) = (points[i][0] - points[j][0], points[i][1] - points[j][1]);
            if (dx * dx + dy * dy).sqrt() <= MIN_POINT_DISTANCE {
                return Err(Error::invalid(format!("points {i} and {j} coincide")));
            }
        }
    }

    let pts = normalize_to_unit_box(points);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        pts[a][0]
            .total_cmp(&pts[b][0])
            .then(pts[a][1].total_cmp(&pts[b][1]))
            .then(a.cmp(&b))
    });

    let mut triangles = sweep(&pts, &order)?;
    legalize(&pts, &mut triangles);

    for t in &mut triangles {
        let area = signed_area(pts[t[0]], pts[t[1]], pts[t[2]]);
        if area <= DEGENERATE_AREA {
            return Err(Error::invalid(format!(
                "degenerate triangle {t:?} (area {area:e}); input is nearly collinear"
            )));
        }
        let r = (0..3).min_by_key(|&k| t[k]).unwrap();
        t.rotate_left(r);
    }
    triangles.sort_unstable();
    Ok(TriangleMesh {
        num_points: n,
        triangles,
    })
}

fn normalize_to_unit_box(points: &[Point]) -> Vec<Point> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };
    points
        .iter()
        .map(|p| [(p[0] - lo[0]) * scale, (p[1] - lo[1]) * scale])
        .collect()
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` lies strictly inside the circumcircle of the positively
/// oriented triangle `a, b, c`.
pub(crate) fn incircle(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Incremental sweep in sorted order; produces a valid (not yet Delaunay)
/// triangulation of the convex hull.
fn sweep(pts: &[Point], order: &[usize]) -> Result<Vec<[usize; 3]>> {
    let (o0, o1) = (order[0], order[1]);
    let k = (2..order.len())
        .find(|&k| orient(pts[o0], pts[o1], pts[order[k]]) != 0.0)
        .ok_or_else(|| Error::invalid("all points are collinear"))?;
    let apex = order[k];

    let mut triangles = Vec::with_capacity(2 * pts.len());
    let left = orient(pts[o0], pts[o1], pts[apex]) > 0.0;
    for w in order[..k].windows(2) {
        triangles.push(if left {
            [w[0], w[1], apex]
        } else {
            [w[1], w[0], apex]
        });
    }
    // Hull kept counter-clockwise (interior on the left of every edge).
    let mut hull: Vec<usize> = if left {
        order[..=k].to_vec()
    } else {
        std::iter::once(o0)
            .chain(std::iter::once(apex))
            .chain(order[1..k].iter().rev().copied())
            .collect()
    };

    for &p in &order[k + 1..] {
        let h = hull.len();
        let visible: Vec<bool> = (0..h)
            .map(|i| orient(pts[hull[i]], pts[hull[(i + 1) % h]], pts[p]) < 0.0)
            .collect();
        let start = (0..h)
            .find(|&i| visible[i] && !visible[(i + h - 1) % h])
            .ok_or_else(|| Error::invalid("sweep found no visible hull edge"))?;
        let mut count = 0;
        while count < h && visible[(start + count) % h] {
            let a = hull[(start + count) % h];
            let b = hull[(start + count + 1) % h];
            triangles.push([b, a, p]);
            count += 1;
        }
        if visible.iter().filter(|&&v| v).count() != count {
            return Err(Error::invalid(
                "hull visibility is not contiguous; input is numerically degenerate",
            ));
        }
        // Drop the interior vertices of the visible chain and splice in p.
        let first = (start + 1) % h;
        let removed: Vec<usize> = (0..count - 1).map(|i| (first + i) % h).collect();
        let insert_after = hull[start];
        let mut next: Vec<usize> = hull
            .iter()
            .enumerate()
            .filter(|(i, _)| !removed.contains(i))
            .map(|(_, &v)| v)
            .collect();
        let pos = next.iter().position(|&v| v == insert_after).unwrap();
        next.insert(pos + 1, p);
        hull = next;
    }
    Ok(triangles)
}

/// Lawson flips until every interior edge is locally Delaunay.
fn legalize(pts: &[Point], triangles: &mut [[usize; 3]]) {
    loop {
        let mut edges: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (ti, t) in triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push((ti, e));
            }
        }
        let mut touched = vec![false; triangles.len()];
        let mut flipped = false;
        for sides in edges.values() {
            let [(t1, e1), (t2, e2)] = sides[..] else {
                continue;
            };
            if touched[t1] || touched[t2] {
                continue;
            }
            let (a, b, c) = (
                triangles[t1][e1],
                triangles[t1][(e1 + 1) % 3],
                triangles[t1][(e1 + 2) % 3],
            );
            let d = triangles[t2][(e2 + 2) % 3];
            if incircle(pts[a], pts[b], pts[c], pts[d]) > INCIRCLE_EPS {
                triangles[t1] = [a, d, c];
                triangles[t2] = [d, b, c];
                touched[t1] = true;
                touched[t2] = true;
                flipped = true;
            }
        }
        if !flipped {
            break;
        }
    }
}

/// Convex hull vertex indices, counter-clockwise under `signed_area`,
/// without collinear vertices.
pub fn convex_hull(points: &[Point]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
    });
    if idx.len() < 3 {
        return idx;
    }
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2
            && orient(
                points[lower[lower.len() - 2]],
                points[lower[lower.len() - 1]],
                points[i],
            ) <= 0.0
        {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2
            && orient(
                points[upper[upper.len() - 2]],
                points[upper[upper.len() - 1]],
                points[i],
            ) <= 0.0
        {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Area of a simple polygon given by vertex indices.
pub fn polygon_area(points: &[Point], polygon: &[usize]) -> f64 {
    let m = polygon.len();
    0.5 * (0..m)
        .map(|i| {
            let p = points[polygon[i]];
            let q = points[polygon[(i + 1) % m]];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        .abs()
}

/// Whether `p` lies inside or on the convex polygon `hull` (ccw indices).
pub fn hull_contains(points: &[Point], hull: &[usize], p: Point, tol: f64) -> bool {
    let m = hull.len();
    (0..m).all(|i| orient(points[hull[i]], points[hull[(i + 1) % m]], p) >= -tol)
}
