//! Procedural talking-face landmark sequences with known blink and mouth
//! events, and matching textured frames.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    delaunay, solve_affine, CropBox, LandmarkScheme, LandmarkSequence, Point, TriangleMesh,
    N_LANDMARKS, NOSE_TIP,
};
use crate::io::LandmarkFile;
use crate::morphing::{rasterize_mask, FrameSequence};
use crate::seed::rng_for;

const UPPER_LIDS: [usize; 4] = [37, 38, 43, 44];
const LOWER_LIDS: [usize; 4] = [40, 41, 46, 47];
/// Lid travel at full closure, in crop units.
const LID_DROP: f64 = 0.04;
const LID_RISE: f64 = 0.005;
const REOPEN_FRAMES: usize = 4;
const MOUTH_OPEN: f64 = 0.05;
const MOUTH_EVENT_FRAMES: usize = 14;

/// Neutral 68-point face in crop units with the nose tip at (0.5, 0.5).
pub fn default_template() -> Vec<Point> {
    let mut p = Vec::with_capacity(N_LANDMARKS);
    for k in 0..17 {
        let phi = std::f64::consts::PI * (1.0 - k as f64 / 16.0);
        p.push([0.5 + 0.36 * phi.cos(), 0.40 + 0.40 * phi.sin()]);
    }
    for (x0, x1) in [(0.22, 0.44), (0.56, 0.78)] {
        for k in 0..5 {
            let s = k as f64 / 4.0;
            p.push([x0 + (x1 - x0) * s, 0.30 - 0.03 * (std::f64::consts::PI * s).sin()]);
        }
    }
    for y in [0.33, 0.39, 0.445, 0.50] {
        p.push([0.5, y]);
    }
    for (x, y) in [(0.44, 0.54), (0.47, 0.55), (0.5, 0.56), (0.53, 0.55), (0.56, 0.54)] {
        p.push([x, y]);
    }
    for cx in [0.34, 0.66] {
        let (cy, w, h) = (0.38, 0.07, 0.025);
        for (dx, dy) in [(-w, 0.0), (-0.025, -h), (0.025, -h), (w, 0.0), (0.025, h), (-0.025, h)] {
            p.push([cx + dx, cy + dy]);
        }
    }
    let (cx, cy) = (0.5, 0.68);
    let outer = [
        (-0.12, 0.0), (-0.08, -0.03), (-0.03, -0.045), (0.0, -0.04), (0.03, -0.045), (0.08, -0.03),
        (0.12, 0.0), (0.08, 0.04), (0.03, 0.055), (0.0, 0.057), (-0.03, 0.055), (-0.08, 0.04),
    ];
    let inner = [
        (-0.10, 0.0), (-0.03, -0.012), (0.0, -0.01), (0.03, -0.012),
        (0.10, 0.0), (0.03, 0.012), (0.0, 0.014), (-0.03, 0.012),
    ];
    for (dx, dy) in outer.iter().chain(&inner) {
        p.push([cx + dx, cy + dy]);
    }
    debug_assert_eq!(p.len(), N_LANDMARKS);
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EventSchedule {
    #[default]
    None,
    /// Events at exactly these transitions.
    Fixed { at: Vec<usize> },
    /// Gaps drawn uniformly from `[mean/2, 3 mean/2]` frames.
    Random { mean_interval: f64 },
}

impl EventSchedule {
    fn draw(&self, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        match self {
            EventSchedule::None => Vec::new(),
            EventSchedule::Fixed { at } => at.iter().copied().filter(|&t| t + 1 < len).collect(),
            EventSchedule::Random { mean_interval } => {
                let lo = (mean_interval / 2.0).max(1.0);
                let hi = (mean_interval * 1.5).max(lo + 1.0);
                let mut out = Vec::new();
                let mut t = rng.random_range(lo..hi);
                while (t as usize) + 1 < len {
                    out.push(t as usize);
                    t += rng.random_range(lo..hi);
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticFaceCorpus {
    /// Neutral face; `None` uses [`default_template`].
    pub template: Option<Vec<Point>>,
    pub sequences: usize,
    pub min_length: usize,
    pub max_length: usize,
    /// Scale of head rotation, zoom and translation; 0 keeps the head still.
    pub rigid_amplitude: f64,
    pub blinks: EventSchedule,
    pub mouth: EventSchedule,
    /// Per-coordinate landmark noise in crop units.
    pub jitter: f64,
    /// Spread of per-sequence face shape around the template.
    pub identity_variation: f64,
    pub crop_size: f64,
    pub image_size: [u32; 2],
    pub fps: f64,
    pub seed: u64,
}

impl Default for SyntheticFaceCorpus {
    fn default() -> Self {
        Self {
            template: None,
            sequences: 8,
            min_length: 64,
            max_length: 128,
            rigid_amplitude: 1.0,
            blinks: EventSchedule::Random { mean_interval: 60.0 },
            mouth: EventSchedule::Random { mean_interval: 40.0 },
            jitter: 5e-4,
            identity_variation: 1.0,
            crop_size: 224.0,
            image_size: [280, 280],
            fps: 25.0,
            seed: 0,
        }
    }
}

/// One generated sequence and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub file: LandmarkFile,
    /// Transitions `t -> t+1` at which the eyes snap shut.
    pub blinks: Vec<usize>,
    /// Frames at which a mouth opening starts.
    pub mouth_events: Vec<usize>,
}

impl SyntheticSequence {
    pub fn aligned(&self) -> Result<LandmarkSequence> {
        Ok(self.file.align()?.sequence)
    }
}

fn closure(f: usize, blinks: &[usize]) -> f64 {
    blinks
        .iter()
        .map(|&b| match f.checked_sub(b + 1) {
            Some(k) if k <= REOPEN_FRAMES => 1.0 - k as f64 / REOPEN_FRAMES as f64,
            _ => 0.0,
        })
        .fold(0.0, f64::max)
}

fn mouth_opening(f: usize, events: &[usize]) -> f64 {
    events
        .iter()
        .map(|&e| match f.checked_sub(e) {
            Some(k) if k <= MOUTH_EVENT_FRAMES => {
                (std::f64::consts::PI * k as f64 / MOUTH_EVENT_FRAMES as f64).sin().powi(2)
            }
            _ => 0.0,
        })
        .fold(0.0, f64::max)
}

struct Oscillator {
    amplitude: f64,
    period: f64,
    phase: f64,
}

impl Oscillator {
    fn draw(amplitude: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            amplitude,
            period: rng.random_range(60.0..150.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }

    fn at(&self, f: usize) -> f64 {
        self.amplitude * (std::f64::consts::TAU * f as f64 / self.period + self.phase).sin()
    }
}

impl SyntheticFaceCorpus {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = &self.template {
            if t.len() != N_LANDMARKS || t.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("template needs {N_LANDMARKS} finite points")));
            }
        }
        if self.min_length < 2 || self.max_length < self.min_length {
            return Err(Error::Config("need 2 <= min_length <= max_length".into()));
        }
        for (name, v) in [
            ("rigid_amplitude", self.rigid_amplitude),
            ("jitter", self.jitter),
            ("identity_variation", self.identity_variation),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if !(self.crop_size > 0.0 && self.fps > 0.0) {
            return Err(Error::Config("crop_size and fps must be positive".into()));
        }
        Ok(())
    }

    pub fn template_points(&self) -> Vec<Point> {
        self.template.clone().unwrap_or_else(default_template)
    }

    pub fn generate(&self) -> Result<Vec<SyntheticSequence>> {
        self.validate()?;
        (0..self.sequences).map(|i| self.generate_one(i)).collect()
    }

    /// Sequence `index`, drawn from its own RNG stream.
    pub fn generate_one(&self, index: usize) -> Result<SyntheticSequence> {
        self.validate()?;
        let mut rng = rng_for(self.seed, index as u64);
        let len = rng.random_range(self.min_length..=self.max_length);
        let blinks = self.blinks.draw(len, &mut rng);
        let mouth_events = self.mouth.draw(len, &mut rng);

        let template = self.template_points();
        let nose = template[NOSE_TIP];
        let iv = self.identity_variation;
        let shape = Normal::new(0.0, 0.003 * iv + f64::MIN_POSITIVE).unwrap();
        let (sx, sy) = (1.0 + 0.06 * iv * rng.random_range(-1.0..1.0), 1.0 + 0.06 * iv * rng.random_range(-1.0..1.0));
        let face: Vec<Point> = template
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let (dx, dy) = if iv > 0.0 && j != NOSE_TIP {
                    (shape.sample(&mut rng), shape.sample(&mut rng))
                } else {
                    (0.0, 0.0)
                };
                [nose[0] + (p[0] - nose[0]) * sx + dx, nose[1] + (p[1] - nose[1]) * sy + dy]
            })
            .collect();

        let a = self.rigid_amplitude;
        let rot = Oscillator::draw(0.05 * a, &mut rng);
        let zoom = Oscillator::draw(0.03 * a, &mut rng);
        let tx = Oscillator::draw(0.04 * a * self.crop_size, &mut rng);
        let ty = Oscillator::draw(0.03 * a * self.crop_size, &mut rng);
        let jitter = Normal::new(0.0, self.jitter + f64::MIN_POSITIVE).unwrap();
        let detector = Normal::new(0.0, 1.5).unwrap();

        let center = [self.image_size[0] as f64 / 2.0, self.image_size[1] as f64 / 2.0];
        let mut frames = Vec::with_capacity(len);
        let mut crops = Vec::with_capacity(len);
        for f in 0..len {
            let c = closure(f, &blinks);
            let m = mouth_opening(f, &mouth_events);
            let (theta, s) = (rot.at(f), 1.0 + zoom.at(f));
            let (cos, sin) = (theta.cos() * s, theta.sin() * s);
            let origin = [
                center[0] - self.crop_size * nose[0] + tx.at(f),
                center[1] - self.crop_size * nose[1] + ty.at(f),
            ];
            let pts: Vec<Point> = face
                .iter()
                .enumerate()
                .map(|(j, &p)| {
                    let mut q = p;
                    q[1] += expression_offset(j, c, m);
                    let d = [q[0] - nose[0], q[1] - nose[1]];
                    let mut r = [nose[0] + cos * d[0] - sin * d[1], nose[1] + sin * d[0] + cos * d[1]];
                    if self.jitter > 0.0 {
                        r[0] += jitter.sample(&mut rng);
                        r[1] += jitter.sample(&mut rng);
                    }
                    [origin[0] + r[0] * self.crop_size, origin[1] + r[1] * self.crop_size]
                })
                .collect();
            let (ox, oy) = if a > 0.0 {
                (detector.sample(&mut rng), detector.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            crops.push(CropBox::new(origin[0] + ox, origin[1] + oy, self.crop_size, self.crop_size));
            frames.push(pts);
        }
        let seq = LandmarkSequence::from_frames(LandmarkScheme::Multipie68, frames)?;
        let mut file = LandmarkFile::new(self.fps, crops, seq)?;
        file.provenance = Some(serde_json::json!({
            "synthetic": {
                "seed": self.seed,
                "index": index,
                "blinks": blinks,
                "mouth_events": mouth_events,
            }
        }));
        Ok(SyntheticSequence {
            file,
            blinks,
            mouth_events,
        })
    }
}

/// Vertical displacement of landmark `j` for eye closure `c` and mouth
/// opening `m`, both in `[0, 1]`.
fn expression_offset(j: usize, c: f64, m: f64) -> f64 {
    if UPPER_LIDS.contains(&j) {
        LID_DROP * c
    } else if LOWER_LIDS.contains(&j) {
        -LID_RISE * c
    } else {
        match j {
            56..=58 | 65..=67 => MOUTH_OPEN * m,
            55 | 59 => 0.7 * MOUTH_OPEN * m,
            49..=53 | 61..=63 => -0.1 * MOUTH_OPEN * m,
            _ => 0.0,
        }
    }
}

fn background(x: u32, y: u32) -> [u8; 3] {
    let v = ((x / 8 + y / 8) % 2) as u8;
    [40 + 30 * v, 60 + 20 * v, 90 + 25 * v]
}

fn skin(u: f64, v: f64) -> [u8; 3] {
    let r = 170.0 + 40.0 * (41.0 * u).sin() * (13.0 * v).cos();
    let g = 120.0 + 45.0 * (37.0 * v + 3.0 * u).sin();
    let b = 95.0 + 55.0 * (23.0 * (u + v)).sin() * (29.0 * u).cos();
    [r, g, b].map(|c| c.round().clamp(0.0, 255.0) as u8)
}

/// Triangulation of the template, used to render and morph synthetic faces.
pub fn template_mesh(template: &[Point]) -> Result<TriangleMesh> {
    delaunay(template)
}

/// Paints a static checkered background and a procedurally textured face
/// that follows the pixel-space landmarks of `file`.
pub fn render_frames(file: &LandmarkFile, template: &[Point], width: u32, height: u32) -> Result<FrameSequence> {
    let mesh = template_mesh(template)?;
    let mut out = Vec::with_capacity(file.frames.len());
    for f in 0..file.frames.len() {
        let pts = file.frames.frame(f);
        let mut img = image::RgbImage::from_fn(width, height, |x, y| image::Rgb(background(x, y)));
        for tri in mesh.triangles() {
            let dst = tri.map(|i| pts[i]);
            let src = tri.map(|i| template[i]);
            let Ok(back) = solve_affine(&dst, &src) else {
                continue;
            };
            let mask = rasterize_mask(&dst, height as usize, width as usize, false);
            for (x, y, _) in mask.pixels() {
                let uv = back.apply([x as f64 + 0.5, y as f64 + 0.5]);
                img.put_pixel(x as u32, y as u32, image::Rgb(skin(uv[0], uv[1])));
            }
        }
        out.push(img);
    }
    FrameSequence::new(out)
}
