//! Reconstruction and temporal-smoothness losses.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::model::WeightMatrix;
use crate::error::{Error, Result};
use crate::geometry::LandmarkSequence;

/// Weighted mean squared landmark error:
/// `1/(T N) * sum_i sum_j w_j * |pred_ij - target_ij|^2`.
pub fn loss_rec(pred: &LandmarkSequence, target: &LandmarkSequence, weights: &[f64]) -> Result<f64> {
    pred.check_same_shape(target, "loss_rec")?;
    if weights.len() != pred.num_points() {
        return Err(Error::invalid(format!(
            "{} landmark weights for {} landmarks",
            weights.len(),
            pred.num_points()
        )));
    }
    let n = pred.num_points();
    let sum: f64 = pred
        .as_flat()
        .iter()
        .zip(target.as_flat())
        .enumerate()
        .map(|(i, (p, q))| {
            let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
            weights[i % n] * (dx * dx + dy * dy)
        })
        .sum();
    Ok(sum / (pred.len() * n) as f64)
}

/// Mean squared change of the basis weights between consecutive steps:
/// `1/((T-1) k) * sum_i sum_j (W[i+1, j] - W[i, j])^2`.
pub fn loss_reg(w: &WeightMatrix) -> Result<f64> {
    let v = w.values();
    if v.nrows() < 2 {
        return Err(Error::invalid("loss_reg needs at least 2 time steps"));
    }
    Ok(reg_value(v))
}

pub fn total_loss(rec: f64, reg: f64, lambda_reg: f64) -> f64 {
    rec + lambda_reg * reg
}

/// One evaluation of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub reg: f64,
    pub total: f64,
}

pub(crate) fn reg_value(w: ArrayView2<'_, f64>) -> f64 {
    let (t, k) = w.dim();
    let mut sum = 0.0;
    for i in 0..t - 1 {
        for j in 0..k {
            let d = w[[i + 1, j]] - w[[i, j]];
            sum += d * d;
        }
    }
    sum / ((t - 1) * k) as f64
}

/// Gradient of `lambda_reg * loss_reg` w.r.t. `W`.
pub(crate) fn reg_grad(w: ArrayView2<'_, f64>, lambda_reg: f64) -> Array2<f64> {
    let (t, k) = w.dim();
    let c = 2.0 * lambda_reg / ((t - 1) * k) as f64;
    let mut g = Array2::zeros((t, k));
    for i in 0..t - 1 {
        for j in 0..k {
            let d = c * (w[[i + 1, j]] - w[[i, j]]);
            g[[i + 1, j]] += d;
            g[[i, j]] -= d;
        }
    }
    g
}

/// Reconstruction loss and its gradient for predictions laid out as
/// `T x 2N` rows `[x0, y0, x1, y1, ...]`.
pub(crate) fn rec_value_and_grad(
    pred: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    weights: &[f64],
) -> (f64, Array2<f64>) {
    let (t, width) = pred.dim();
    let n = width / 2;
    let norm = 1.0 / (t * n) as f64;
    let mut g = Array2::zeros((t, width));
    let mut sum = 0.0;
    for i in 0..t {
        for c in 0..width {
            let d = pred[[i, c]] - target[[i, c]];
            let w = weights[c / 2];
            sum += w * d * d;
            g[[i, c]] = 2.0 * w * d * norm;
        }
    }
    (sum * norm, g)
}
