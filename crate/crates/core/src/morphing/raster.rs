//! Triangle coverage masks.
//!
//! Vertices are snapped to a 1/256 subpixel grid and tested against pixel
//! centers with integer edge functions. Points exactly on an edge belong to
//! the triangle only when the edge is a top or left edge, so two triangles
//! sharing an edge never both claim a pixel.

use crate::geometry::Point;

const SUBPIXEL: f64 = 256.0;
const AA_GRID: i64 = 4;

/// Pixel rectangle `[x, x + width) x [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width && y < self.y + self.height
    }
}

/// Coverage over a bounding box; zero everywhere outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMask {
    pub rect: PixelRect,
    coverage: Vec<f32>,
}

impl TriangleMask {
    pub fn empty() -> Self {
        Self {
            rect: PixelRect::default(),
            coverage: Vec::new(),
        }
    }

    /// Coverage at absolute pixel `(x, y)`.
    pub fn at(&self, x: usize, y: usize) -> f32 {
        if !self.rect.contains(x, y) {
            return 0.0;
        }
        self.coverage[(y - self.rect.y) * self.rect.width + (x - self.rect.x)]
    }

    pub fn coverage(&self) -> &[f32] {
        &self.coverage
    }

    pub fn area(&self) -> f64 {
        self.coverage.iter().map(|&c| c as f64).sum()
    }

    pub fn covered_pixels(&self) -> usize {
        self.coverage.iter().filter(|&&c| c > 0.0).count()
    }

    /// Absolute coordinates of every pixel with nonzero coverage, row-major.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize, f32)> + '_ {
        let r = self.rect;
        self.coverage.iter().enumerate().filter_map(move |(i, &c)| {
            (c > 0.0).then(|| (r.x + i % r.width, r.y + i / r.width, c))
        })
    }
}

struct Edge {
    a: [i64; 2],
    d: [i64; 2],
    inclusive: bool,
}

impl Edge {
    fn new(a: [i64; 2], b: [i64; 2]) -> Self {
        let d = [b[0] - a[0], b[1] - a[1]];
        Self {
            a,
            d,
            inclusive: (d[1] == 0 && d[0] > 0) || d[1] < 0,
        }
    }

    fn covers(&self, p: [i64; 2]) -> bool {
        let e = self.d[0] * (p[1] - self.a[1]) - self.d[1] * (p[0] - self.a[0]);
        e > 0 || (e == 0 && self.inclusive)
    }
}

fn snap(p: Point) -> [i64; 2] {
    [(p[0] * SUBPIXEL).round() as i64, (p[1] * SUBPIXEL).round() as i64]
}

/// Hard (binary) or 4x4 supersampled coverage of `tri` on an `height x width`
/// image. Off-image parts are clipped; zero-area triangles give an empty mask.
pub fn rasterize_mask(tri: &[Point; 3], height: usize, width: usize, anti_alias: bool) -> TriangleMask {
    if tri.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return TriangleMask::empty();
    }
    let mut v = tri.map(snap);
    let cross = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[1][1] - v[0][1]) * (v[2][0] - v[0][0]);
    if cross == 0 {
        return TriangleMask::empty();
    }
    if cross < 0 {
        v.swap(1, 2);
    }
    let edges = [Edge::new(v[0], v[1]), Edge::new(v[1], v[2]), Edge::new(v[2], v[0])];

    let lo = |k: usize| v.iter().map(|p| p[k]).min().unwrap().div_euclid(SUBPIXEL as i64);
    let hi = |k: usize| v.iter().map(|p| p[k]).max().unwrap().div_euclid(SUBPIXEL as i64) + 1;
    let x0 = lo(0).clamp(0, width as i64) as usize;
    let x1 = hi(0).clamp(0, width as i64) as usize;
    let y0 = lo(1).clamp(0, height as i64) as usize;
    let y1 = hi(1).clamp(0, height as i64) as usize;
    let rect = PixelRect {
        x: x0,
        y: y0,
        width: x1.saturating_sub(x0),
        height: y1.saturating_sub(y0),
    };
    if rect.is_empty() {
        return TriangleMask::empty();
    }

    let unit = SUBPIXEL as i64;
    let inside = |p: [i64; 2]| edges.iter().all(|e| e.covers(p));
    let mut coverage = Vec::with_capacity(rect.width * rect.height);
    for y in y0..y1 {
        for x in x0..x1 {
            let (px, py) = (x as i64 * unit, y as i64 * unit);
            let c = if anti_alias {
                let step = unit / AA_GRID;
                let mut hits = 0;
                for sy in 0..AA_GRID {
                    for sx in 0..AA_GRID {
                        if inside([px + sx * step + step / 2, py + sy * step + step / 2]) {
                            hits += 1;
                        }
                    }
                }
                hits as f32 / (AA_GRID * AA_GRID) as f32
            } else if inside([px + unit / 2, py + unit / 2]) {
                1.0
            } else {
                0.0
            };
            coverage.push(c);
        }
    }
    TriangleMask { rect, coverage }
}
