//! Per-landmark artifact series and their Pearson correlation matrices.

use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FaceRegion, TemporalArtifact};
use crate::io::atomic::write_atomic;
use crate::io::frames::encode_png;

/// Scalar extracted from each artifact displacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesComponent {
    #[default]
    Magnitude,
    X,
    Y,
}

impl SeriesComponent {
    fn of(self, d: [f64; 2]) -> f64 {
        match self {
            SeriesComponent::Magnitude => d[0].hypot(d[1]),
            SeriesComponent::X => d[0],
            SeriesComponent::Y => d[1],
        }
    }
}

/// Observation-major table: one row per (clip, step), one column per landmark.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactSeries {
    num_points: usize,
    values: Vec<f64>,
}

impl ArtifactSeries {
    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn observations(&self) -> usize {
        self.values.len() / self.num_points
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_points..(i + 1) * self.num_points]
    }

    /// The full series of landmark `j`.
    pub fn landmark(&self, j: usize) -> Vec<f64> {
        self.values.iter().skip(j).step_by(self.num_points).copied().collect()
    }

    /// Rows `[start, start + len)`.
    pub fn rows(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.observations() {
            return Err(Error::invalid("row range out of bounds"));
        }
        Ok(Self {
            num_points: self.num_points,
            values: self.values[start * self.num_points..(start + len) * self.num_points].to_vec(),
        })
    }
}

pub fn artifact_series(artifacts: &[TemporalArtifact], component: SeriesComponent) -> Result<ArtifactSeries> {
    let first = artifacts.first().ok_or_else(|| Error::invalid("no artifacts"))?;
    let n = first.num_points();
    if n == 0 {
        return Err(Error::invalid("artifacts have no landmarks"));
    }
    let mut values = Vec::new();
    for (c, a) in artifacts.iter().enumerate() {
        if a.num_points() != n {
            return Err(Error::SequenceMismatch(format!(
                "artifact {c} has {} landmarks, expected {n}",
                a.num_points()
            )));
        }
        values.extend(a.as_flat().iter().map(|&d| component.of(d)));
    }
    Ok(ArtifactSeries { num_points: n, values })
}

/// Variances at or below this are treated as exactly zero.
pub const ZERO_VARIANCE: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    size: usize,
    values: Vec<f64>,
    pub sample_count: usize,
    /// Landmarks whose series never varied; their rows and columns are 0.
    pub zero_variance: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn from_values(size: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::invalid("matrix values do not match size"));
        }
        Ok(Self {
            size,
            values,
            sample_count: 0,
            zero_variance: vec![false; size],
        })
    }

    pub fn identity(size: usize) -> Self {
        let mut values = vec![0.0; size * size];
        for i in 0..size {
            values[i * size + i] = 1.0;
        }
        Self::from_values(size, values).unwrap()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs_off_diagonal(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.size {
            for j in 0..self.size {
                if i != j {
                    m = m.max(self.get(i, j).abs());
                }
            }
        }
        m
    }

    pub fn max_abs_difference(&self, other: &CorrelationMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.size {
            for j in 0..self.size {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{}", self.get(i, j)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    /// Diverging heatmap: blue at -1, white at 0, red at +1.
    pub fn heatmap(&self, cell: u32) -> RgbImage {
        let cell = cell.max(1);
        let side = self.size as u32 * cell;
        RgbImage::from_fn(side, side, |x, y| {
            let v = self.get((y / cell) as usize, (x / cell) as usize).clamp(-1.0, 1.0);
            let fade = (255.0 * (1.0 - v.abs())).round() as u8;
            if v >= 0.0 {
                Rgb([255, fade, fade])
            } else {
                Rgb([fade, fade, 255])
            }
        })
    }

    pub fn write_heatmap(&self, path: &Path, cell: u32) -> Result<()> {
        write_atomic(path, &encode_png(&self.heatmap(cell))?)
    }
}

/// Pearson correlation between every pair of landmark series. Sums run in
/// observation order so the result is reproducible bit for bit.
pub fn correlation_matrix(series: &ArtifactSeries) -> Result<CorrelationMatrix> {
    let n = series.num_points();
    let m = series.observations();
    if m < 2 {
        return Err(Error::invalid(format!("need at least 2 observations, got {m}")));
    }
    let mut mean = vec![0.0; n];
    for o in 0..m {
        for (acc, v) in mean.iter_mut().zip(series.observation(o)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);

    let mut cov = vec![0.0; n * n];
    let mut centered = vec![0.0; n];
    for o in 0..m {
        for ((c, v), mu) in centered.iter_mut().zip(series.observation(o)).zip(&mean) {
            *c = v - mu;
        }
        for i in 0..n {
            let ci = centered[i];
            for j in i..n {
                cov[i * n + j] += ci * centered[j];
            }
        }
    }
    let var: Vec<f64> = (0..n).map(|i| cov[i * n + i] / (m - 1) as f64).collect();
    let zero_variance: Vec<bool> = var.iter().map(|&v| v <= ZERO_VARIANCE).collect();
    for (j, z) in zero_variance.iter().enumerate() {
        if *z {
            log::warn!("landmark {j} has zero artifact variance");
        }
    }

    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let r = if zero_variance[i] || zero_variance[j] {
                0.0
            } else if i == j {
                1.0
            } else {
                (cov[i * n + j] / (cov[i * n + i] * cov[j * n + j]).sqrt()).clamp(-1.0, 1.0)
            };
            values[i * n + j] = r;
            values[j * n + i] = r;
        }
    }
    Ok(CorrelationMatrix {
        size: n,
        values,
        sample_count: m,
        zero_variance,
    })
}

/// The seven 68-point regions as index blocks.
pub fn region_blocks() -> Vec<Vec<usize>> {
    FaceRegion::ALL.iter().map(|r| r.indices().collect()).collect()
}

/// Mean |r| over distinct pairs inside a block minus mean |r| over pairs
/// from different blocks. Landmarks outside every block and zero-variance
/// landmarks are ignored; an empty pair class contributes 0.
pub fn block_structure_score(corr: &CorrelationMatrix, blocks: &[Vec<usize>]) -> f64 {
    let mut label = vec![None; corr.size()];
    for (b, idx) in blocks.iter().enumerate() {
        for &i in idx {
            if i < corr.size() && !corr.zero_variance[i] {
                label[i] = Some(b);
            }
        }
    }
    let (mut within, mut nw, mut across, mut na) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..corr.size() {
        for j in (i + 1)..corr.size() {
            match (label[i], label[j]) {
                (Some(a), Some(b)) if a == b => {
                    within += corr.get(i, j).abs();
                    nw += 1;
                }
                (Some(_), Some(_)) => {
                    across += corr.get(i, j).abs();
                    na += 1;
                }
                _ => {}
            }
        }
    }
    let mean = |s: f64, k: usize| if k == 0 { 0.0 } else { s / k as f64 };
    mean(within, nw) - mean(across, na)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TemporalArtifact;

    #[test]
    fn three_four_five() {
        let a = TemporalArtifact::from_steps(vec![vec![[3.0, 4.0], [0.0, 0.0]]]).unwrap();
        let s = artifact_series(&[a.clone()], SeriesComponent::Magnitude).unwrap();
        assert_eq!(s.landmark(0), vec![5.0]);
        assert_eq!(artifact_series(&[a], SeriesComponent::Y).unwrap().landmark(0), vec![4.0]);
        assert!(artifact_series(&[], SeriesComponent::Magnitude).is_err());
    }

    #[test]
    fn co_moving_landmarks_correlate_perfectly() {
        let steps = (0..10)
            .map(|t| {
                let v = (t as f64 * 0.7).sin() + 2.0;
                vec![[v, 0.0], [2.0 * v, 0.0], [-v, 0.0], [1.0, 1.0]]
            })
            .collect();
        let a = TemporalArtifact::from_steps(steps).unwrap();
        let c = correlation_matrix(&artifact_series(&[a], SeriesComponent::X).unwrap()).unwrap();
        assert!((c.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((c.get(0, 2) + 1.0).abs() < 1e-12);
        assert!(c.zero_variance[3]);
        assert_eq!(c.get(3, 3), 0.0);
        assert_eq!(c.get(0, 3), 0.0);
        assert_eq!(c.sample_count, 10);
    }

    #[test]
    fn single_observation_is_rejected() {
        let a = TemporalArtifact::from_steps(vec![vec![[1.0, 0.0]]]).unwrap();
        assert!(correlation_matrix(&artifact_series(&[a], SeriesComponent::X).unwrap()).is_err());
    }

    #[test]
    fn block_score_extremes() {
        let blocks = vec![vec![0, 1, 2], vec![3, 4]];
        assert_eq!(block_structure_score(&CorrelationMatrix::identity(5), &blocks), 0.0);
        let mut v = vec![0.0; 25];
        for b in &blocks {
            for &i in b {
                for &j in b {
                    v[i * 5 + j] = 1.0;
                }
            }
        }
        let m = CorrelationMatrix::from_values(5, v).unwrap();
        assert_eq!(block_structure_score(&m, &blocks), 1.0);
    }

    #[test]
    fn csv_and_heatmap_shapes() {
        let m = CorrelationMatrix::identity(3);
        assert_eq!(m.to_csv(), "1,0,0\n0,1,0\n0,0,1\n");
        let img = m.heatmap(4);
        assert_eq!(img.dimensions(), (12, 12));
        assert_eq!(img.get_pixel(0, 0).0, [255, 0, 0]);
        assert_eq!(img.get_pixel(5, 0).0, [255, 255, 255]);
    }
}
