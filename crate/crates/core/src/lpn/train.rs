//! Mini-batch training with Adam and a cosine schedule.

use ndarray::{Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainOptions;
use super::model::LpnModel;
use crate::error::{Error, Result};
use crate::geometry::LandmarkSequence;

/// Anything that can hand out training clips of the model's length.
pub trait ClipSource: Sync {
    fn sample_clip(&self, rng: &mut ChaCha8Rng) -> Result<LandmarkSequence>;
}

/// Cycles through a fixed list of clips.
pub struct FixedClips(pub Vec<LandmarkSequence>);

impl ClipSource for FixedClips {
    fn sample_clip(&self, rng: &mut ChaCha8Rng) -> Result<LandmarkSequence> {
        use rand::Rng;
        if self.0.is_empty() {
            return Err(Error::invalid("no clips to sample"));
        }
        Ok(self.0[rng.random_range(0..self.0.len())].clone())
    }
}

/// Batch-mean losses after one optimizer step's forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub loss_rec: f64,
    pub loss_reg: f64,
    pub total: f64,
}

pub struct TrainOutcome {
    pub model: LpnModel,
    pub history: Vec<LossRecord>,
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &LpnModel) -> Self {
        Self {
            m: model.zero_gradients(),
            v: model.zero_gradients(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>], lr: f64, o: &TrainOptions) {
        self.t += 1;
        let bc1 = 1.0 - o.beta1.powi(self.t);
        let bc2 = 1.0 - o.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = o.beta1 * *m + (1.0 - o.beta1) * g;
                *v = o.beta2 * *v + (1.0 - o.beta2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + o.epsilon);
            });
        }
    }
}

/// Trains `model` on clips drawn from `corpus`. Batches are drawn
/// sequentially from one seeded stream; per-clip gradients may be computed
/// in parallel but are summed in batch order, so the result does not depend
/// on the thread count.
pub fn train(
    mut model: LpnModel,
    corpus: &dyn ClipSource,
    opts: &TrainOptions,
    seed: u64,
) -> Result<TrainOutcome> {
    opts.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(&model);
    let mut history = Vec::with_capacity(opts.steps);
    let scale = 1.0 / opts.batch_size as f64;

    for step in 0..opts.steps {
        let clips = (0..opts.batch_size)
            .map(|_| corpus.sample_clip(&mut rng))
            .collect::<Result<Vec<_>>>()?;
        let results = clips
            .par_iter()
            .map(|c| model.loss_and_gradients(c))
            .collect::<Result<Vec<_>>>()?;

        let mut grads = model.zero_gradients();
        let (mut rec, mut reg, mut total) = (0.0, 0.0, 0.0);
        for (loss, g) in &results {
            rec += loss.rec;
            reg += loss.reg;
            total += loss.total;
            for (acc, gi) in grads.iter_mut().zip(g) {
                acc.scaled_add(scale, gi);
            }
        }
        let record = LossRecord {
            step,
            loss_rec: rec * scale,
            loss_reg: reg * scale,
            total: total * scale,
        };
        if !record.total.is_finite() {
            return Err(Error::TrainingFailure {
                step,
                reason: format!("loss became {}", record.total),
            });
        }
        let norm = grads
            .iter()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(Error::TrainingFailure {
                step,
                reason: "non-finite gradient".into(),
            });
        }
        let clip = opts.clip_grad_norm;
        if clip > 0.0 && norm > clip {
            let s = clip / norm;
            grads.iter_mut().for_each(|g| *g *= s);
        }
        adam.step(model.parameters_mut(), &grads, opts.lr_at(step), opts);
        if step % 100 == 0 || step + 1 == opts.steps {
            log::info!(
                "step {step}: rec {:.3e} reg {:.3e} total {:.3e}",
                record.loss_rec,
                record.loss_reg,
                record.total
            );
        }
        history.push(record);
    }
    Ok(TrainOutcome { model, history })
}

/// Means of `values` over consecutive non-overlapping windows.
pub fn windowed_means(values: &[f64], window: usize) -> Vec<f64> {
    values
        .chunks(window.max(1))
        .filter(|c| c.len() == window.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}
