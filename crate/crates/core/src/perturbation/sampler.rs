//! Clip sampling from long landmark sequences, optionally guided towards
//! the frames with the strongest eye and mouth motion.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nonrigid_indices, LandmarkSequence};
use crate::lpn::ClipSource;

/// Transition index `t` (frames `t -> t+1`) with the largest L1 motion over
/// eye and mouth landmarks. Ties go to the smallest `t`.
pub fn max_nonrigid_timestep(seq: &LandmarkSequence) -> Result<usize> {
    if seq.len() < 2 {
        return Err(Error::invalid("need at least 2 frames to measure motion"));
    }
    if seq.num_points() <= nonrigid_indices().max().unwrap_or(0) {
        return Err(Error::invalid("sequence does not use the 68-point layout"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for t in 0..seq.len() - 1 {
        let (a, b) = (seq.frame(t), seq.frame(t + 1));
        let score: f64 = nonrigid_indices()
            .map(|j| (b[j][0] - a[j][0]).abs() + (b[j][1] - a[j][1]).abs())
            .sum();
        if score > best.1 {
            best = (t, score);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Uniform,
    #[default]
    Guided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipSampler {
    pub clip_length: usize,
    pub mode: SamplingMode,
    /// Standard deviation of the clip start in frames; `None` means half the
    /// clip length.
    pub guided_std: Option<f64>,
}

impl Default for ClipSampler {
    fn default() -> Self {
        Self {
            clip_length: 16,
            mode: SamplingMode::Guided,
            guided_std: None,
        }
    }
}

/// A clip together with its position in the parent sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub start: usize,
    pub sequence: LandmarkSequence,
}

impl ClipSampler {
    pub fn new(clip_length: usize, mode: SamplingMode) -> Self {
        Self {
            clip_length,
            mode,
            guided_std: None,
        }
    }

    pub fn std(&self) -> f64 {
        self.guided_std.unwrap_or(self.clip_length as f64 / 2.0)
    }

    /// Draws a clip start. In guided mode the start follows a Gaussian with
    /// mean `t* - T/2`, discretized and truncated to the valid starts.
    pub fn sample_start(
        &self,
        parent_len: usize,
        peak: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize> {
        if self.clip_length == 0 || parent_len < self.clip_length {
            return Err(Error::invalid(format!(
                "cannot cut a {}-frame clip from {parent_len} frames",
                self.clip_length
            )));
        }
        let max_start = parent_len - self.clip_length;
        if max_start == 0 {
            return Ok(0);
        }
        match (self.mode, peak) {
            (SamplingMode::Guided, Some(peak)) => {
                let mean = peak as f64 - self.clip_length as f64 / 2.0;
                Ok(truncated_gaussian_index(max_start + 1, mean, self.std(), rng))
            }
            _ => Ok(rng.random_range(0..=max_start)),
        }
    }

    pub fn sample_clip(&self, seq: &LandmarkSequence, rng: &mut ChaCha8Rng) -> Result<Clip> {
        let peak = match self.mode {
            SamplingMode::Guided if seq.len() >= 2 => Some(max_nonrigid_timestep(seq)?),
            _ => None,
        };
        self.sample_clip_with_peak(seq, peak, rng)
    }

    fn sample_clip_with_peak(
        &self,
        seq: &LandmarkSequence,
        peak: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Clip> {
        let start = self.sample_start(seq.len(), peak, rng)?;
        Ok(Clip {
            start,
            sequence: seq.slice(start, self.clip_length)?,
        })
    }
}

/// Index in `0..n` with probability proportional to
/// `exp(-(i - mean)^2 / (2 std^2))`. An infinite `std` is uniform.
fn truncated_gaussian_index(n: usize, mean: f64, std: f64, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    if !std.is_finite() {
        return ((u * n as f64) as usize).min(n - 1);
    }
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            let z = (i as f64 - mean) / std;
            (-0.5 * z * z).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        // Mean far outside the range with a tiny std: snap to the nearest end.
        return if mean < 0.0 { 0 } else { n - 1 };
    }
    let mut target = u * total;
    for (i, w) in weights.iter().enumerate() {
        if target < *w {
            return i;
        }
        target -= w;
    }
    n - 1
}

/// Training corpus: picks a sequence uniformly, then a clip with `sampler`.
pub struct ClipCorpus {
    sequences: Vec<LandmarkSequence>,
    peaks: Vec<usize>,
    sampler: ClipSampler,
}

impl ClipCorpus {
    pub fn new(sequences: Vec<LandmarkSequence>, sampler: ClipSampler) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::invalid("empty corpus"));
        }
        if let Some(s) = sequences.iter().find(|s| s.len() < sampler.clip_length) {
            return Err(Error::invalid(format!(
                "corpus sequence of {} frames is shorter than the clip length {}",
                s.len(),
                sampler.clip_length
            )));
        }
        let peaks = sequences
            .iter()
            .map(|s| if s.len() >= 2 { max_nonrigid_timestep(s) } else { Ok(0) })
            .collect::<Result<_>>()?;
        Ok(Self {
            sequences,
            peaks,
            sampler,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn sequences(&self) -> &[LandmarkSequence] {
        &self.sequences
    }
}

impl ClipSource for ClipCorpus {
    fn sample_clip(&self, rng: &mut ChaCha8Rng) -> Result<LandmarkSequence> {
        let i = rng.random_range(0..self.sequences.len());
        let peak = match self.sampler.mode {
            SamplingMode::Guided => Some(self.peaks[i]),
            SamplingMode::Uniform => None,
        };
        Ok(self
            .sampler
            .sample_clip_with_peak(&self.sequences[i], peak, rng)?
            .sequence)
    }
}
