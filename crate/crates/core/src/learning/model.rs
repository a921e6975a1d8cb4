//! One-hidden-layer perceptron with a softmax output and hand-written backprop.
//!
//! Parameters live in one flat vector laid out as
//!
//! ```text
//! [ W1 (hidden x input, row-major) | b1 (hidden) | W2 (classes x hidden, row-major) | b2 (classes) ]
//! ```
//!
//! so that gradients, updates and divergence norms are plain vector operations.

use std::ops::{Index, IndexMut};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::data::{DeviceDataset, Sample};
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Layer sizes of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl Dims {
    pub fn new(input: usize, hidden: usize, classes: usize) -> Self {
        Self {
            input,
            hidden,
            classes,
            activation: Activation::Relu,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn param_count(&self) -> usize {
        self.input * self.hidden + self.hidden + self.hidden * self.classes + self.classes
    }

    fn offsets(&self) -> Offsets {
        let w1 = 0;
        let b1 = w1 + self.input * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden * self.classes;
        Offsets { b1, w2, b2 }
    }
}

struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Model weights `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    dims: Dims,
    params: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            params: vec![0.0; dims.param_count()],
        }
    }

    pub fn from_vec(dims: Dims, params: Vec<f64>) -> Result<Self> {
        if params.len() != dims.param_count() {
            return Err(Error::DimensionMismatch {
                expected: dims.param_count(),
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("model parameters must be finite".into()));
        }
        Ok(Self { dims, params })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// `w - lambda * grad`.
    pub fn step(&self, grad: &Gradient, lambda: f64) -> Result<Self> {
        if grad.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: grad.len(),
            });
        }
        let params = self
            .params
            .iter()
            .zip(grad.as_slice())
            .map(|(w, g)| w - lambda * g)
            .collect();
        Ok(Self {
            dims: self.dims,
            params,
        })
    }

    /// Class probabilities for one input.
    pub fn predict_proba(&self, features: &[f64]) -> Vec<f64> {
        let mut hidden_pre = vec![0.0; self.dims.hidden];
        let mut hidden = vec![0.0; self.dims.hidden];
        let mut logits = vec![0.0; self.dims.classes];
        self.forward(features, &mut hidden_pre, &mut hidden, &mut logits);
        let lse = log_sum_exp(&logits);
        logits.iter().map(|z| (z - lse).exp()).collect()
    }

    /// Predicted class; ties go to the lowest index.
    pub fn predict(&self, features: &[f64]) -> usize {
        let mut hidden_pre = vec![0.0; self.dims.hidden];
        let mut hidden = vec![0.0; self.dims.hidden];
        let mut logits = vec![0.0; self.dims.classes];
        self.forward(features, &mut hidden_pre, &mut hidden, &mut logits);
        argmax_lowest(&logits)
    }

    fn forward(&self, x: &[f64], hidden_pre: &mut [f64], hidden: &mut [f64], logits: &mut [f64]) {
        let Dims {
            input,
            hidden: width,
            activation,
            ..
        } = self.dims;
        let off = self.dims.offsets();
        let p = &self.params;
        for j in 0..width {
            let row = &p[j * input..(j + 1) * input];
            let z = p[off.b1 + j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
            hidden_pre[j] = z;
            hidden[j] = activation.apply(z);
        }
        for (c, logit) in logits.iter_mut().enumerate() {
            let row = &p[off.w2 + c * width..off.w2 + (c + 1) * width];
            *logit = p[off.b2 + c] + row.iter().zip(hidden.iter()).map(|(w, h)| w * h).sum::<f64>();
        }
    }
}

/// Gradient vector congruent with a [`ModelParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradient(Vec<f64>);

impl Gradient {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &Gradient) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn sub(&self, other: &Gradient) -> Gradient {
        Gradient(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, factor: f64) -> Gradient {
        Gradient(self.0.iter().map(|a| a * factor).collect())
    }
}

impl Index<usize> for Gradient {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Gradient {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Initial weights.
///
/// Weight matrices are drawn from `N(0, scale^2 / fan_in)` in layout order; biases start at
/// zero. `scale = 0` yields the all-zero model, whose softmax output is uniform.
pub fn init_model(dims: Dims, scale: f64, rng: &mut SimRng) -> Result<ModelParams> {
    if dims.input == 0 || dims.hidden == 0 || dims.classes == 0 {
        return Err(Error::InvalidArgument("model dimensions must be positive".into()));
    }
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "init scale {scale} must be finite and >= 0"
        )));
    }
    let mut model = ModelParams::zeros(dims);
    if scale == 0.0 {
        return Ok(model);
    }
    let off = dims.offsets();
    let w1 = Normal::new(0.0, scale / (dims.input as f64).sqrt()).expect("finite std");
    let w2 = Normal::new(0.0, scale / (dims.hidden as f64).sqrt()).expect("finite std");
    for v in &mut model.params[..off.b1] {
        *v = w1.sample(rng);
    }
    for v in &mut model.params[off.w2..off.b2] {
        *v = w2.sample(rng);
    }
    Ok(model)
}

fn check_dims(model: &ModelParams, samples: &[Sample]) -> Result<()> {
    let dims = model.dims;
    for s in samples {
        if s.features.len() != dims.input {
            return Err(Error::DimensionMismatch {
                expected: dims.input,
                actual: s.features.len(),
            });
        }
        if s.label >= dims.classes {
            return Err(Error::InvalidArgument(format!(
                "label {} out of range for {} classes",
                s.label, dims.classes
            )));
        }
    }
    Ok(())
}

/// Mean cross-entropy of the shard and its exact full-batch gradient.
pub fn local_loss_and_gradient(model: &ModelParams, data: &DeviceDataset) -> Result<(f64, Gradient)> {
    let samples = data.samples();
    check_dims(model, samples)?;
    let dims = model.dims;
    let off = dims.offsets();
    let p = &model.params;

    let mut grad = vec![0.0; p.len()];
    let mut loss = 0.0;
    let mut hidden_pre = vec![0.0; dims.hidden];
    let mut hidden = vec![0.0; dims.hidden];
    let mut logits = vec![0.0; dims.classes];
    let mut d_hidden = vec![0.0; dims.hidden];

    for s in samples {
        model.forward(&s.features, &mut hidden_pre, &mut hidden, &mut logits);
        let lse = log_sum_exp(&logits);
        loss += lse - logits[s.label];

        // dL/dz2 = softmax - onehot
        d_hidden.iter_mut().for_each(|d| *d = 0.0);
        for c in 0..dims.classes {
            let mut dz = (logits[c] - lse).exp();
            if c == s.label {
                dz -= 1.0;
            }
            grad[off.b2 + c] += dz;
            let w_row = off.w2 + c * dims.hidden;
            for j in 0..dims.hidden {
                grad[w_row + j] += dz * hidden[j];
                d_hidden[j] += dz * p[w_row + j];
            }
        }
        for j in 0..dims.hidden {
            let dz1 = d_hidden[j] * dims.activation.derivative(hidden_pre[j], hidden[j]);
            if dz1 == 0.0 {
                continue;
            }
            grad[off.b1 + j] += dz1;
            let row = &mut grad[j * dims.input..(j + 1) * dims.input];
            for (g, x) in row.iter_mut().zip(&s.features) {
                *g += dz1 * x;
            }
        }
    }

    let inv = 1.0 / samples.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, Gradient(grad)))
}

/// Mean cross-entropy and argmax accuracy over `samples`.
pub fn evaluate(model: &ModelParams, samples: &[Sample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_dims(model, samples)?;
    let dims = model.dims;
    let mut hidden_pre = vec![0.0; dims.hidden];
    let mut hidden = vec![0.0; dims.hidden];
    let mut logits = vec![0.0; dims.classes];
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in samples {
        model.forward(&s.features, &mut hidden_pre, &mut hidden, &mut logits);
        loss += log_sum_exp(&logits) - logits[s.label];
        if argmax_lowest(&logits) == s.label {
            correct += 1;
        }
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_shard(dims: Dims, n: usize, rng: &mut SimRng) -> DeviceDataset {
        let samples = (0..n)
            .map(|i| {
                let x = (0..dims.input).map(|_| rng.random_range(-1.0..1.0)).collect();
                Sample::new(x, i % dims.classes)
            })
            .collect();
        DeviceDataset::new(samples).unwrap()
    }

    fn finite_difference(model: &ModelParams, data: &DeviceDataset, step: f64) -> Vec<f64> {
        (0..model.len())
            .map(|i| {
                let mut plus = model.params.clone();
                let mut minus = model.params.clone();
                plus[i] += step;
                minus[i] -= step;
                let lp = local_loss_and_gradient(&ModelParams::from_vec(model.dims, plus).unwrap(), data)
                    .unwrap()
                    .0;
                let lm = local_loss_and_gradient(&ModelParams::from_vec(model.dims, minus).unwrap(), data)
                    .unwrap()
                    .0;
                (lp - lm) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_central_differences() {
        for activation in [Activation::Tanh, Activation::Relu] {
            let dims = Dims::new(4, 6, 3).with_activation(activation);
            let mut rng = seeded(11);
            let model = init_model(dims, 1.0, &mut rng).unwrap();
            let data = random_shard(dims, 5, &mut rng);
            let (_, grad) = local_loss_and_gradient(&model, &data).unwrap();
            let fd = finite_difference(&model, &data, 1e-5);
            let worst = grad
                .as_slice()
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-6, "{activation:?}: max abs error {worst}");
        }
    }

    #[test]
    fn zero_model_has_uniform_loss() {
        let dims = Dims::new(3, 4, 5);
        let model = ModelParams::zeros(dims);
        let mut rng = seeded(2);
        let data = random_shard(dims, 10, &mut rng);
        let (loss, _) = local_loss_and_gradient(&model, &data).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicating_samples_leaves_loss_and_gradient_unchanged() {
        let dims = Dims::new(3, 4, 3);
        let mut rng = seeded(3);
        let model = init_model(dims, 1.0, &mut rng).unwrap();
        let data = random_shard(dims, 6, &mut rng);
        let doubled: Vec<Sample> = data.samples().iter().chain(data.samples()).cloned().collect();
        let doubled = DeviceDataset::new(doubled).unwrap();
        let (l1, g1) = local_loss_and_gradient(&model, &data).unwrap();
        let (l2, g2) = local_loss_and_gradient(&model, &doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let model = ModelParams::zeros(Dims::new(3, 2, 2));
        let data = DeviceDataset::new(vec![Sample::new(vec![1.0; 4], 0)]).unwrap();
        assert!(matches!(
            local_loss_and_gradient(&model, &data),
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 4
            })
        ));
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let dims = Dims::new(5, 7, 3);
        let a = init_model(dims, 1.0, &mut seeded(9)).unwrap();
        let b = init_model(dims, 1.0, &mut seeded(9)).unwrap();
        let c = init_model(dims, 1.0, &mut seeded(10)).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert_ne!(a.as_slice(), c.as_slice());
        let z = init_model(dims, 0.0, &mut seeded(9)).unwrap();
        assert!(z.as_slice().iter().all(|v| *v == 0.0));
        assert_eq!(z.len(), 5 * 7 + 7 + 7 * 3 + 3);
    }

    #[test]
    fn uniform_model_accuracy_is_share_of_class_zero() {
        // All logits tie, so every prediction is class 0; on a balanced C-class set
        // exactly 1/C of the samples are class 0.
        let dims = Dims::new(2, 3, 4);
        let samples: Vec<Sample> = (0..40).map(|i| Sample::new(vec![i as f64, 1.0], i % 4)).collect();
        let (loss, acc) = evaluate(&ModelParams::zeros(dims), &samples).unwrap();
        assert_eq!(acc, 0.25);
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn evaluate_single_correct_sample_and_repeatability() {
        let dims = Dims::new(1, 1, 2);
        // b2 favours class 1.
        let model = ModelParams::from_vec(dims, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let samples = vec![Sample::new(vec![0.3], 1)];
        let first = evaluate(&model, &samples).unwrap();
        assert_eq!(first.1, 1.0);
        assert_eq!(first, evaluate(&model, &samples).unwrap());
        assert!(matches!(evaluate(&model, &[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn small_step_does_not_increase_shard_loss() {
        let dims = Dims::new(4, 8, 3);
        for seed in 0..5 {
            let mut rng = seeded(seed);
            let model = init_model(dims, 1.0, &mut rng).unwrap();
            let data = random_shard(dims, 12, &mut rng);
            let (before, grad) = local_loss_and_gradient(&model, &data).unwrap();
            let next = model.step(&grad, 1e-3).unwrap();
            let (after, _) = local_loss_and_gradient(&next, &data).unwrap();
            assert!(after <= before, "seed {seed}: {after} > {before}");
        }
    }
}
