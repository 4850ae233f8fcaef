//! Flat-parameter multilayer perceptrons with hand-written backpropagation.
//!
//! Parameters live in a single [`ParamVector`] laid out layer by layer as
//! `W_l` (row-major, `out x in`) followed by `b_l`. The client classifier is
//! an `[input, hidden, classes]` network with a softmax head; the Q-network
//! reuses the same machinery with a linear head.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};
use serde::{Deserialize, Serialize};

use crate::config::ClientTrainConfig;
use crate::dataset::Sample;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("expected input of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty batch")]
    EmptyBatch,
}

/// Flattened model parameters (or a parameter-space direction).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    /// `self - base`.
    pub fn delta_from(&self, base: &Self) -> Self {
        Self(self.0.iter().zip(&base.0).map(|(a, b)| a - b).collect())
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.0 {
            *a *= alpha;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Cosine similarity; 0 when either vector has norm below `1e-12`.
    pub fn cosine(&self, other: &Self) -> f64 {
        let (na, nb) = (self.norm(), other.norm());
        if na < 1e-12 || nb < 1e-12 {
            return 0.0;
        }
        (self.dot(other) / (na * nb)).clamp(-1.0, 1.0)
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Fully connected ReLU network with a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: ParamVector,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self {
            sizes: sizes.to_vec(),
            params: ParamVector::zeros(param_count(sizes)),
        }
    }

    /// Glorot-uniform weights `U(-a, a)`, `a = sqrt(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn init(sizes: &[usize], rng: &mut RngStream) -> Self {
        let mut mlp = Self::zeros(sizes);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for p in &mut mlp.params[offset..offset + fan_in * fan_out] {
                *p = rng.symmetric(a);
            }
            offset += fan_in * fan_out + fan_out;
        }
        mlp
    }

    pub fn with_params(sizes: &[usize], params: ParamVector) -> Result<Self, ModelError> {
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(ModelError::LengthMismatch(params.len(), expected));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamVector) {
        assert_eq!(params.len(), self.params.len());
        self.params = params;
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() == self.input_dim() {
            Ok(())
        } else {
            Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            })
        }
    }

    /// Activations of every layer; `trace[0]` is the input, the last entry the
    /// linear output.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::new();
        self.trace_into(x, &mut acts);
        acts
    }

    /// Same as [`Mlp::trace`] but reuses the buffers in `acts`.
    fn trace_into(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.resize_with(self.sizes.len(), Vec::new);
        acts[0].clear();
        acts[0].extend_from_slice(x);
        let mut offset = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let (head, tail) = acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            out.clear();
            out.extend(
                weights
                    .chunks_exact(n_in)
                    .zip(bias)
                    .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b),
            );
            if l < last {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            offset += n_in * n_out + n_out;
        }
    }

    /// Linear outputs for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_input(x)?;
        Ok(self.trace(x).pop().expect("output layer"))
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given the upstream gradient
    /// with respect to the linear output.
    fn backward(&self, trace: &[Vec<f64>], d_out: &[f64], grad: &mut [f64]) {
        let mut delta = d_out.to_vec();
        self.backward_with(trace, &mut delta, &mut Vec::new(), grad);
    }

    /// Backward pass starting from `delta` (overwritten); `prev` is scratch.
    fn backward_with(&self, trace: &[Vec<f64>], delta: &mut Vec<f64>, prev: &mut Vec<f64>, grad: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        let mut off = self.params.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            off -= n_in * n_out + n_out;
            let input = &trace[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                prev.clear();
                prev.resize(n_in, 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *p += d * w;
                    }
                }
                // ReLU derivative: hidden activation was clamped at zero.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                core::mem::swap(delta, prev);
            }
        }
    }

    /// Gradient of `0.5 * sum((out - target)^2)` restricted to the outputs
    /// named in `targets` (index, target). Returns the loss.
    pub fn accumulate_squared_error(&self, x: &[f64], targets: &[(usize, f64)], grad: &mut [f64]) -> f64 {
        let trace = self.trace(x);
        let out = trace.last().expect("output layer");
        let mut d_out = vec![0.0; out.len()];
        let mut loss = 0.0;
        for &(i, t) in targets {
            let e = out[i] - t;
            d_out[i] += e;
            loss += 0.5 * e * e;
        }
        self.backward(&trace, &d_out, grad);
        loss
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One-hidden-layer softmax classifier used by every client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    net: Mlp,
}

impl MlpModel {
    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        Self {
            net: Mlp::zeros(&[input, hidden, classes]),
        }
    }

    pub fn init(input: usize, hidden: usize, classes: usize, rng: &mut RngStream) -> Self {
        Self {
            net: Mlp::init(&[input, hidden, classes], rng),
        }
    }

    /// Same architecture, different parameters.
    pub fn with_params(&self, params: ParamVector) -> Result<Self, ModelError> {
        Ok(Self {
            net: Mlp::with_params(self.net.sizes(), params)?,
        })
    }

    pub fn from_parts(input: usize, hidden: usize, classes: usize, params: ParamVector) -> Result<Self, ModelError> {
        Ok(Self {
            net: Mlp::with_params(&[input, hidden, classes], params)?,
        })
    }

    pub fn params(&self) -> &ParamVector {
        self.net.params()
    }

    pub fn param_count(&self) -> usize {
        self.net.params().len()
    }

    pub fn n_classes(&self) -> usize {
        self.net.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Class probabilities for one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(softmax(&self.net.forward(features)?))
    }

    /// Predicted class; ties go to the lowest class index.
    pub fn predict(&self, features: &[f64]) -> Result<usize, ModelError> {
        Ok(argmax(&self.net.forward(features)?))
    }

    /// Mean cross-entropy over `batch`.
    pub fn mean_loss<'a>(&self, batch: impl IntoIterator<Item = &'a Sample>) -> Result<f64, ModelError> {
        let mut total = 0.0;
        let mut n = 0usize;
        for s in batch {
            let p = self.forward(&s.features)?;
            total -= libm::log(p[s.label].max(1e-300));
            n += 1;
        }
        if n == 0 {
            return Err(ModelError::EmptyBatch);
        }
        Ok(total / n as f64)
    }

    /// Mean cross-entropy gradient over `batch` in canonical parameter order.
    pub fn grad_cross_entropy<'a>(
        &self,
        batch: impl IntoIterator<Item = &'a Sample>,
    ) -> Result<ParamVector, ModelError> {
        let mut grad = ParamVector::zeros(self.param_count());
        let mut n = 0usize;
        let (mut acts, mut delta, mut prev) = (Vec::new(), Vec::new(), Vec::new());
        for s in batch {
            self.net.check_input(&s.features)?;
            self.net.trace_into(&s.features, &mut acts);
            let logits = acts.last().expect("output layer");
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            delta.clear();
            delta.extend(logits.iter().map(|z| libm::exp(z - max)));
            let sum: f64 = delta.iter().sum();
            for d in delta.iter_mut() {
                *d /= sum;
            }
            delta[s.label] -= 1.0;
            self.net.backward_with(&acts, &mut delta, &mut prev, &mut grad);
            n += 1;
        }
        if n == 0 {
            return Err(ModelError::EmptyBatch);
        }
        grad.scale(1.0 / n as f64);
        Ok(grad)
    }
}

/// Runs `local_epochs` of shuffled mini-batch SGD from `global` on the
/// client's data and returns the resulting parameter vector.
pub fn local_train(
    global: &MlpModel,
    data: &[Sample],
    cfg: &ClientTrainConfig,
    rng: &mut RngStream,
) -> Result<ParamVector, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut model = global.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.local_epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let grad = model.grad_cross_entropy(chunk.iter().map(|&i| &data[i]))?;
            model.net.params_mut().add_scaled(-cfg.learning_rate, &grad);
        }
    }
    Ok(model.net.params.clone())
}
