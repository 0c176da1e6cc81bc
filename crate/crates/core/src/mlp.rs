//! Feed-forward classifier with ReLU hidden layers and dropout after every
//! non-linearity.

use alloc::vec::Vec;
use rand::Rng as _;

use crate::dist::{log_sum_exp, softmax_unchecked};
use crate::error::{invalid, Error, Result};
use crate::rng;

/// How dropout behaves in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Dropout masks sampled from the pass seed (training).
    TrainWithDropout,
    /// Dropout disabled. Inverted dropout scaling means no rescale is needed.
    EvalDeterministic,
    /// Dropout masks sampled from the pass seed at inference (MC-dropout).
    EvalWithDropout,
}

impl ForwardMode {
    fn uses_dropout(self) -> bool {
        !matches!(self, ForwardMode::EvalDeterministic)
    }
}

/// A dense ReLU network. Layer `l` maps `dims[l]` inputs to `dims[l + 1]`
/// outputs; weights are stored row-major as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    dropout_rate: f64,
    seed: u64,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(invalid!("need at least 2 layer dims, got {}", dims.len()));
    }
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(invalid!("layer dim {i} is zero"));
    }
    Ok(())
}

fn check_dropout(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(invalid!("dropout rate {rate} outside [0, 1)"));
    }
    Ok(())
}

impl MlpModel {
    /// He-uniform initialization (`U(-b, b)`, `b = sqrt(6 / fan_in)`) with
    /// zero biases, drawn deterministically from `seed`.
    pub fn init(dims: &[usize], dropout_rate: f64, seed: u64) -> Result<Self> {
        check_dims(dims)?;
        check_dropout(dropout_rate)?;
        let mut rng = rng::seeded(rng::derive(seed, rng::STREAM_INIT, 0));
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = libm::sqrt(6.0 / fan_in as f64);
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect(),
            );
            biases.push(alloc::vec![0.0; fan_out]);
        }
        Ok(Self {
            dims: dims.to_vec(),
            weights,
            biases,
            dropout_rate,
            seed,
        })
    }

    /// Assemble a model from explicit parameters, validating every shape.
    pub fn from_parts(
        dims: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        check_dims(&dims)?;
        check_dropout(dropout_rate)?;
        let layers = dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::DimensionMismatch {
                expected: layers,
                found: weights.len().min(biases.len()),
            });
        }
        for l in 0..layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            if weights[l].len() != fan_in * fan_out {
                return Err(Error::DimensionMismatch {
                    expected: fan_in * fan_out,
                    found: weights[l].len(),
                });
            }
            if biases[l].len() != fan_out {
                return Err(Error::DimensionMismatch {
                    expected: fan_out,
                    found: biases[l].len(),
                });
            }
            if weights[l].iter().chain(&biases[l]).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("model parameters"));
            }
        }
        Ok(Self {
            dims,
            weights,
            biases,
            dropout_rate,
            seed,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        check_dropout(rate)?;
        self.dropout_rate = rate;
        Ok(())
    }

    /// Seed the model was initialized from (not persisted in weight files).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Parameters rounded through `f32`, i.e. what survives a weight-file round trip.
    pub fn rounded_to_f32(&self) -> Self {
        let round = |v: &Vec<f64>| v.iter().map(|&x| x as f32 as f64).collect();
        Self {
            dims: self.dims.clone(),
            weights: self.weights.iter().map(round).collect(),
            biases: self.biases.iter().map(round).collect(),
            dropout_rate: self.dropout_rate,
            seed: self.seed,
        }
    }

    /// Full forward pass keeping everything needed for backpropagation.
    pub fn forward(&self, x: &[f32], mode: ForwardMode, rng_seed: u64) -> Result<Forward> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input features"));
        }
        let dropout = mode.uses_dropout() && self.dropout_rate > 0.0;
        let mut mask_rng = dropout.then(|| rng::seeded(rng_seed));
        let keep_scale = 1.0 / (1.0 - self.dropout_rate);

        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre_activations = Vec::with_capacity(layers - 1);
        let mut masks = Vec::with_capacity(layers - 1);
        let mut current: Vec<f64> = x.iter().map(|&v| v as f64).collect();

        for l in 0..layers {
            let z = affine(&self.weights[l], &self.biases[l], &current);
            inputs.push(current);
            if l + 1 == layers {
                return Ok(Forward {
                    logits: z,
                    cache: ForwardCache {
                        inputs,
                        pre_activations,
                        masks,
                    },
                });
            }
            let mut a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
            let mask = mask_rng.as_mut().map(|r| {
                let m: Vec<f64> = (0..a.len())
                    .map(|_| {
                        if r.random::<f64>() < self.dropout_rate {
                            0.0
                        } else {
                            keep_scale
                        }
                    })
                    .collect();
                for (ai, mi) in a.iter_mut().zip(&m) {
                    *ai *= mi;
                }
                m
            });
            pre_activations.push(z);
            masks.push(mask);
            current = a;
        }
        unreachable!("network has at least one layer")
    }

    /// Logits only.
    pub fn logits(&self, x: &[f32], mode: ForwardMode, rng_seed: u64) -> Result<Vec<f64>> {
        Ok(self.forward(x, mode, rng_seed)?.logits)
    }

    /// Backpropagate `grad_logits` through a cached pass, accumulating into `grads`.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &[f64], grads: &mut Gradients) {
        let layers = self.num_layers();
        let mut delta = grad_logits.to_vec();
        for l in (0..layers).rev() {
            let input = &cache.inputs[l];
            let fan_in = self.dims[l];
            let gw = &mut grads.weights[l];
            for (o, &d) in delta.iter().enumerate() {
                grads.biases[l][o] += d;
                if d != 0.0 {
                    let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                    for (g, &a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut prev = alloc::vec![0.0; fan_in];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (p, &wv) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *p += d * wv;
                    }
                }
            }
            let z = &cache.pre_activations[l - 1];
            let mask = &cache.masks[l - 1];
            for (i, p) in prev.iter_mut().enumerate() {
                let relu = if z[i] > 0.0 { 1.0 } else { 0.0 };
                let m = mask.as_ref().map_or(1.0, |m| m[i]);
                *p *= relu * m;
            }
            delta = prev;
        }
    }

    /// Cross-entropy loss and parameter gradients for one sample.
    pub fn loss_and_gradients(
        &self,
        x: &[f32],
        label: usize,
        mode: ForwardMode,
        rng_seed: u64,
    ) -> Result<(f64, Gradients)> {
        let fwd = self.forward(x, mode, rng_seed)?;
        let (loss, grad) = cross_entropy_and_grad(&fwd.logits, label)?;
        let mut grads = Gradients::zeros_like(self);
        self.backward(&fwd.cache, &grad, &mut grads);
        Ok((loss, grads))
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let fan_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bias)| bias + dot(&w[o * fan_in..(o + 1) * fan_in], x))
        .collect()
}

/// Dot product with four interleaved partial sums combined pairwise, then
/// the tail added in order. The order is fixed, so results are reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ta, tb) = (ca.remainder(), cb.remainder());
    let mut acc = [0.0f64; 4];
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ta.iter().zip(tb) {
        s += x * y;
    }
    s
}

/// Output of [`MlpModel::forward`].
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub cache: ForwardCache,
}

/// Activation record for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (post-dropout for hidden layers).
    pub inputs: Vec<Vec<f64>>,
    /// Hidden pre-activations.
    pub pre_activations: Vec<Vec<f64>>,
    /// Hidden dropout multipliers (`0` or `1 / (1 - p)`), `None` when dropout is off.
    pub masks: Vec<Option<Vec<f64>>>,
}

/// Parameter-shaped accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model
                .weights
                .iter()
                .map(|w| alloc::vec![0.0; w.len()])
                .collect(),
            biases: model
                .biases
                .iter()
                .map(|b| alloc::vec![0.0; b.len()])
                .collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        for v in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flatten()
        {
            *v *= k;
        }
    }

    pub fn fill(&mut self, value: f64) {
        for v in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flatten()
        {
            *v = value;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .all(|v| v.is_finite())
    }

    pub(crate) fn same_shape(&self, model: &MlpModel) -> bool {
        self.weights.len() == model.weights.len()
            && self.biases.len() == model.biases.len()
            && self
                .weights
                .iter()
                .zip(&model.weights)
                .all(|(a, b)| a.len() == b.len())
            && self
                .biases
                .iter()
                .zip(&model.biases)
                .all(|(a, b)| a.len() == b.len())
    }
}

/// `-ln softmax(z)[label]` and its gradient `softmax(z) - onehot(label)`.
pub fn cross_entropy_and_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let loss = log_sum_exp(logits) - logits[label];
    let mut grad = softmax_unchecked(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}
