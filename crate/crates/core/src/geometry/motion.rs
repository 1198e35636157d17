//! Frame-to-frame landmark motion and temporal artifacts.

use serde::{Deserialize, Serialize};

use super::landmarks::{LandmarkSequence, Point};
use crate::error::{Error, Result};

/// Per-transition landmark displacements, `(T-1) x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    points_per_frame: usize,
    steps: Vec<Point>,
}

impl MotionField {
    pub fn num_steps(&self) -> usize {
        self.steps.len() / self.points_per_frame
    }

    pub fn num_points(&self) -> usize {
        self.points_per_frame
    }

    pub fn step(&self, i: usize) -> &[Point] {
        let n = self.points_per_frame;
        &self.steps[i * n..(i + 1) * n]
    }

    pub fn as_flat(&self) -> &[Point] {
        &self.steps
    }

    /// Rebuilds a sequence from its first frame by cumulative summation.
    pub fn integrate(&self, first: &[Point], seq: &LandmarkSequence) -> Result<LandmarkSequence> {
        if first.len() != self.points_per_frame {
            return Err(Error::invalid("first frame has the wrong landmark count"));
        }
        let mut frames = Vec::with_capacity(self.num_steps() + 1);
        let mut cur = first.to_vec();
        frames.push(cur.clone());
        for i in 0..self.num_steps() {
            for (c, d) in cur.iter_mut().zip(self.step(i)) {
                c[0] += d[0];
                c[1] += d[1];
            }
            frames.push(cur.clone());
        }
        LandmarkSequence::from_frames(seq.scheme(), frames)
    }
}

/// Difference between the motion of a manipulated clip and its pristine
/// counterpart, `(T-1) x N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalArtifact {
    points_per_frame: usize,
    steps: Vec<Point>,
}

impl TemporalArtifact {
    pub fn from_steps(steps: Vec<Vec<Point>>) -> Result<Self> {
        let n = steps.first().map(Vec::len).unwrap_or(0);
        if steps.is_empty() || n == 0 {
            return Err(Error::invalid("temporal artifact is empty"));
        }
        if steps.iter().any(|s| s.len() != n) {
            return Err(Error::invalid("ragged temporal artifact"));
        }
        Ok(Self {
            points_per_frame: n,
            steps: steps.into_iter().flatten().collect(),
        })
    }

    pub fn zeros(num_steps: usize, points_per_frame: usize) -> Self {
        Self {
            points_per_frame,
            steps: vec![[0.0; 2]; num_steps * points_per_frame],
        }
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len() / self.points_per_frame
    }

    pub fn num_points(&self) -> usize {
        self.points_per_frame
    }

    pub fn step(&self, i: usize) -> &[Point] {
        let n = self.points_per_frame;
        &self.steps[i * n..(i + 1) * n]
    }

    pub fn step_mut(&mut self, i: usize) -> &mut [Point] {
        let n = self.points_per_frame;
        &mut self.steps[i * n..(i + 1) * n]
    }

    pub fn as_flat(&self) -> &[Point] {
        &self.steps
    }

    pub fn to_nested(&self) -> Vec<Vec<Point>> {
        self.steps
            .chunks_exact(self.points_per_frame)
            .map(<[Point]>::to_vec)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.steps.iter().all(|p| p[0] == 0.0 && p[1] == 0.0)
    }

    /// L1 mass restricted to landmark `indices`.
    pub fn l1_over(&self, indices: impl IntoIterator<Item = usize> + Clone) -> f64 {
        (0..self.num_steps())
            .map(|i| {
                let step = self.step(i);
                indices
                    .clone()
                    .into_iter()
                    .map(|j| step[j][0].abs() + step[j][1].abs())
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Landmark displacement between consecutive frames.
pub fn motion(seq: &LandmarkSequence) -> Result<MotionField> {
    if seq.len() < 2 {
        return Err(Error::invalid(format!(
            "motion needs at least 2 frames, got {}",
            seq.len()
        )));
    }
    let steps = seq
        .frames()
        .zip(seq.frames().skip(1))
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| [q[0] - p[0], q[1] - p[1]]))
        .collect();
    Ok(MotionField {
        points_per_frame: seq.num_points(),
        steps,
    })
}

/// `motion(fake) - motion(real)`.
pub fn temporal_artifacts(
    fake: &LandmarkSequence,
    real: &LandmarkSequence,
) -> Result<TemporalArtifact> {
    fake.check_same_shape(real, "temporal_artifacts")?;
    let mf = motion(fake)?;
    let mr = motion(real)?;
    let steps = mf
        .steps
        .iter()
        .zip(&mr.steps)
        .map(|(f, r)| [f[0] - r[0], f[1] - r[1]])
        .collect();
    Ok(TemporalArtifact {
        points_per_frame: fake.num_points(),
        steps,
    })
}

/// Total absolute mass of an artifact; zero exactly when every entry is zero.
pub fn artifact_l1(artifact: &TemporalArtifact) -> f64 {
    artifact
        .steps
        .iter()
        .map(|p| p[0].abs() + p[1].abs())
        .sum()
}
