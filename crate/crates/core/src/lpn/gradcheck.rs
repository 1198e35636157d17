//! Finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::LpnModel;
use crate::error::{Error, Result};
use crate::geometry::LandmarkSequence;

/// Gradients smaller than this in magnitude are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Lower bound on the number of checked entries across all tensors.
    pub min_samples: usize,
    pub seed: u64,
    /// Negates the analytic gradient of the named tensor; a negative control.
    pub negate_tensor: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            min_samples: 200,
            seed: 0,
            negate_tensor: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub checked: usize,
    pub tensors: usize,
    /// L2 norm of the full analytic gradient.
    pub gradient_norm: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Max relative error between analytic and central-difference gradients of
/// the total loss on `seq`.
pub fn gradient_check(model: &LpnModel, seq: &LandmarkSequence, eps: f64) -> Result<f64> {
    let opts = GradCheckOptions {
        eps,
        ..Default::default()
    };
    Ok(gradient_check_with(model, seq, &opts)?.max_relative_error)
}

pub fn gradient_check_with(
    model: &LpnModel,
    seq: &LandmarkSequence,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(opts.eps > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let (_, mut grads) = model.loss_and_gradients(seq)?;
    if let Some(name) = &opts.negate_tensor {
        let i = model
            .parameter_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::invalid(format!("no tensor named {name}")))?;
        grads[i].mapv_inplace(|g| -g);
    }
    let gradient_norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();

    let tensors = model.parameters().len();
    let per_tensor = opts.min_samples.div_ceil(tensors).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        checked: 0,
        tensors,
        gradient_norm,
    };
    for ti in 0..tensors {
        let len = model.parameters()[ti].len();
        let name = model.parameter_names()[ti].clone();
        for flat in sample(&mut rng, len, per_tensor.min(len)) {
            let orig = model.parameters()[ti].as_slice().unwrap()[flat];
            let mut eval = |value: f64| -> Result<f64> {
                probe.parameters_mut()[ti].as_slice_mut().unwrap()[flat] = value;
                Ok(probe.loss(seq)?.total)
            };
            // five-point stencil; truncation error is O(eps^4)
            let h = opts.eps;
            let (p1, m1) = (eval(orig + h)?, eval(orig - h)?);
            let (p2, m2) = (eval(orig + 2.0 * h)?, eval(orig - 2.0 * h)?);
            probe.parameters_mut()[ti].as_slice_mut().unwrap()[flat] = orig;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
            let analytic = grads[ti].as_slice().unwrap()[flat];
            let err = relative_error(analytic, numeric);
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_tensor = name.clone();
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
