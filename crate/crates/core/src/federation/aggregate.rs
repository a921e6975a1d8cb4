use super::DeviceMap;
use crate::error::{Error, Result};
use crate::learning::{Gradient, ModelParams};

/// `sum_{n in S} omega_n beta_n grad_n / sum_{n in S} beta_n`, with `omega = 1` when no
/// weights are given.
///
/// Devices are summed in the order they appear in `selected`; callers that need
/// bit-reproducible results pass it sorted.
pub fn aggregate(
    grads: &DeviceMap<Gradient>,
    betas: &[usize],
    selected: &[usize],
    weights: Option<&DeviceMap<f64>>,
) -> Result<Gradient> {
    let first = *selected.first().ok_or(Error::EmptySelection)?;
    let len = grads.get(&first).ok_or(Error::MissingGradient(first))?.len();
    let mut acc = Gradient::zeros(len);
    let mut beta_total = 0.0;
    for &n in selected {
        let grad = grads.get(&n).ok_or(Error::MissingGradient(n))?;
        if grad.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                actual: grad.len(),
            });
        }
        let beta = *betas
            .get(n)
            .ok_or_else(|| Error::InvalidArgument(format!("no sample count for device {n}")))?
            as f64;
        let omega = match weights {
            Some(w) => *w
                .get(&n)
                .ok_or_else(|| Error::InvalidArgument(format!("no weight for device {n}")))?,
            None => 1.0,
        };
        acc.axpy(omega * beta, grad);
        beta_total += beta;
    }
    Ok(acc.scale(1.0 / beta_total))
}

/// One SGD step `w - lambda * grad`.
pub fn apply_update(model: &ModelParams, grad: &Gradient, lambda: f64) -> Result<ModelParams> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate {lambda} must be > 0"
        )));
    }
    model.step(grad, lambda)
}

/// Gradient error of the (optionally weighted) selected aggregate against complete selection
/// over every device with a sample count.
pub fn selection_error(
    grads_all: &DeviceMap<Gradient>,
    betas: &[usize],
    selected: &[usize],
    weights: Option<&DeviceMap<f64>>,
) -> Result<Gradient> {
    let everyone: Vec<usize> = (0..betas.len()).collect();
    let partial = aggregate(grads_all, betas, selected, weights)?;
    let complete = aggregate(grads_all, betas, &everyone, None)?;
    Ok(partial.sub(&complete))
}

/// Euclidean distance between two parameter vectors.
pub fn weight_divergence(w: &ModelParams, w_true: &ModelParams) -> Result<f64> {
    if w.len() != w_true.len() {
        return Err(Error::DimensionMismatch {
            expected: w_true.len(),
            actual: w.len(),
        });
    }
    Ok(w.as_slice()
        .iter()
        .zip(w_true.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}
