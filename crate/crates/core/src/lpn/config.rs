use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nonrigid_indices, N_LANDMARKS};

/// Reconstruction weight for eye and mouth landmarks.
pub const NONRIGID_WEIGHT: f64 = 5.0;

/// Architecture and loss settings of the landmark perturbation network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpnConfig {
    /// Number of deformation bases.
    pub k: usize,
    /// Token / latent width.
    pub d: usize,
    /// Clip length in frames.
    pub t: usize,
    pub n_landmarks: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    /// Hidden width of the feed-forward sublayers.
    pub ff_dim: usize,
    pub lambda_reg: f64,
    /// Per-landmark reconstruction weights. Empty means the default
    /// (5.0 on eyes and mouth, 1.0 elsewhere).
    pub landmark_weights: Vec<f64>,
}

impl Default for LpnConfig {
    fn default() -> Self {
        Self {
            k: 64,
            d: 128,
            t: 16,
            n_landmarks: N_LANDMARKS,
            encoder_layers: 4,
            decoder_layers: 4,
            heads: 4,
            ff_dim: 256,
            lambda_reg: 0.01,
            landmark_weights: Vec::new(),
        }
    }
}

impl LpnConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return fail("d must be a positive multiple of heads");
        }
        if self.t < 2 {
            return fail("clip length t must be at least 2");
        }
        if self.n_landmarks == 0 || self.ff_dim == 0 {
            return fail("n_landmarks and ff_dim must be positive");
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return fail("lambda_reg must be finite and non-negative");
        }
        if !self.landmark_weights.is_empty() {
            if self.landmark_weights.len() != self.n_landmarks {
                return fail("landmark_weights must have one entry per landmark");
            }
            if self
                .landmark_weights
                .iter()
                .any(|w| !(w.is_finite() && *w > 0.0))
            {
                return fail("landmark weights must be positive");
            }
        }
        Ok(())
    }

    /// Effective per-landmark weights.
    pub fn weights(&self) -> Vec<f64> {
        if !self.landmark_weights.is_empty() {
            return self.landmark_weights.clone();
        }
        let mut w = vec![1.0; self.n_landmarks];
        if self.n_landmarks == N_LANDMARKS {
            for j in nonrigid_indices() {
                w[j] = NONRIGID_WEIGHT;
            }
        }
        w
    }

    pub fn token_width(&self) -> usize {
        2 * self.n_landmarks
    }
}

/// Adaptive-moment optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Linear warm-up length before the cosine decay.
    pub warmup_steps: usize,
    /// Floor of the cosine schedule as a fraction of `learning_rate`.
    pub min_lr_ratio: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_grad_norm: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            steps: 2000,
            batch_size: 16,
            warmup_steps: 0,
            min_lr_ratio: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_grad_norm: 1.0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.clip_grad_norm >= 0.0 && self.clip_grad_norm.is_finite()) {
            return Err(Error::Config("clip_grad_norm must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Learning rate for 0-based `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.learning_rate * (self.min_lr_ratio + (1.0 - self.min_lr_ratio) * cosine)
    }
}
