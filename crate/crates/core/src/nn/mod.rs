//! Dense feed-forward networks with exact backpropagation.
//!
//! An [`MlpNetwork`] is a stack of affine layers. Every hidden layer applies
//! the same [`HiddenActivation`]; the last layer applies an
//! [`OutputActivation`]. Weights are row-major with shape
//! `(layer_sizes[i + 1], layer_sizes[i])`.
//!
//! Gradients are computed by hand for this fixed topology: [`MlpNetwork::backward`]
//! returns both the parameter gradients and the gradient with respect to the
//! input vector, which the actor updates need in order to chain through a critic.

mod checkpoint;
mod lagged;
mod optim;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use lagged::{LaggedCopy, DEFAULT_LAG_PERIOD};
pub use optim::{OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("input length mismatch: expected {expected}, got {actual}")]
    InputDim { expected: usize, actual: usize },
    #[error("upstream gradient length mismatch: expected {expected}, got {actual}")]
    UpstreamDim { expected: usize, actual: usize },
    #[error("invalid layer sizes {0:?}: need at least two positive sizes")]
    InvalidLayers(Vec<usize>),
    #[error("parameter shape mismatch in group {group}")]
    ShapeMismatch { group: usize },
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("checkpoint: bad magic bytes")]
    BadMagic,
    #[error("checkpoint: unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint: truncated file")]
    Truncated,
    #[error("checkpoint: {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint: unknown activation tag {0}")]
    UnknownActivation(u8),
    #[error("checkpoint io: {0}")]
    Io(String),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

impl HiddenActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            HiddenActivation::Relu => z.max(0.0),
            HiddenActivation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation value `y = f(z)`.
    fn derivative(self, y: f64) -> f64 {
        match self {
            HiddenActivation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            HiddenActivation::Tanh => 1.0 - y * y,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            HiddenActivation::Relu => 0,
            HiddenActivation::Tanh => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(HiddenActivation::Relu),
            1 => Ok(HiddenActivation::Tanh),
            t => Err(NnError::UnknownActivation(t)),
        }
    }
}

impl OutputActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Identity => z,
            OutputActivation::Sigmoid => sigmoid(z),
        }
    }

    fn derivative(self, y: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Sigmoid => y * (1.0 - y),
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            OutputActivation::Identity => 0,
            OutputActivation::Sigmoid => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(OutputActivation::Identity),
            1 => Ok(OutputActivation::Sigmoid),
            t => Err(NnError::UnknownActivation(t)),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    hidden_activation: HiddenActivation,
    output_activation: OutputActivation,
}

/// Per-parameter gradients, laid out exactly like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Gradients {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            g.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self
            .weights
            .iter_mut()
            .zip(&other.weights)
            .chain(self.biases.iter_mut().zip(&other.biases))
        {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flat_map(|g| g.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Slices in canonical order `W0, b0, W1, b1, ...`.
    pub fn groups(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

/// Activations recorded by a forward pass, consumed by backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[L]` is the output.
    activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace always holds the input")
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

/// First-layer pre-activations contributed by a fixed input prefix.
///
/// Critics take `[observation ; action]` as input. When many candidate actions
/// are scored against one observation, the observation part of the first
/// affine map is computed once and reused.
#[derive(Debug, Clone)]
pub struct PrefixCache {
    prefix_len: usize,
    partial: Vec<f64>,
}

impl MlpNetwork {
    /// Builds a network with uniform Glorot initialisation and zero biases.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, hidden_activation, output_activation)?;
        for (i, w) in net.weights.iter_mut().enumerate() {
            let fan_in = layer_sizes[i] as f64;
            let fan_out = layer_sizes[i + 1] as f64;
            let bound = (6.0 / (fan_in + fan_out)).sqrt();
            for x in w.iter_mut() {
                *x = rng.gen_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(
        layer_sizes: &[usize],
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(NnError::InvalidLayers(layer_sizes.to_vec()));
        }
        let weights = layer_sizes
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(MlpNetwork {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation,
            output_activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn hidden_activation(&self) -> HiddenActivation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// Mutable parameter slices in canonical order `W0, b0, W1, b1, ...`.
    pub fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    pub fn param_groups(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    /// Overwrites every parameter with the values of `other`.
    ///
    /// Panics if the topologies differ.
    pub fn copy_params_from(&mut self, other: &MlpNetwork) {
        assert_eq!(self.layer_sizes, other.layer_sizes, "topology mismatch");
        for (dst, src) in self.weights.iter_mut().zip(&other.weights) {
            dst.copy_from_slice(src);
        }
        for (dst, src) in self.biases.iter_mut().zip(&other.biases) {
            dst.copy_from_slice(src);
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(NnError::InputDim {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    fn activate(&self, layer: usize, z: &mut [f64]) {
        if layer + 1 == self.num_layers() {
            z.iter_mut()
                .for_each(|x| *x = self.output_activation.apply(*x));
        } else {
            z.iter_mut()
                .for_each(|x| *x = self.hidden_activation.apply(*x));
        }
    }

    fn affine(&self, layer: usize, input: &[f64]) -> Vec<f64> {
        let n_in = self.layer_sizes[layer];
        let w = &self.weights[layer];
        self.biases[layer]
            .iter()
            .enumerate()
            .map(|(o, b)| {
                let row = &w[o * n_in..(o + 1) * n_in];
                b + dot(row, input)
            })
            .collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for layer in 0..self.num_layers() {
            let mut z = self.affine(layer, &x);
            self.activate(layer, &mut z);
            x = z;
        }
        Ok(x)
    }

    /// Forward pass that keeps every intermediate activation.
    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(input.to_vec());
        for layer in 0..self.num_layers() {
            let mut z = self.affine(layer, &activations[layer]);
            self.activate(layer, &mut z);
            activations.push(z);
        }
        Ok(ForwardTrace { activations })
    }

    /// Gradients of `upstream · f(input)` with respect to parameters and input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let trace = self.forward_trace(input)?;
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_accumulate(&trace, upstream, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Adds the parameter gradients of `upstream · f(x)` into `grads` and
    /// returns the input gradient.
    pub fn backward_accumulate(
        &self,
        trace: &ForwardTrace,
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(NnError::UpstreamDim {
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        let n_layers = self.num_layers();
        // delta = dL/dz for the current layer
        let mut delta: Vec<f64> = trace.activations[n_layers]
            .iter()
            .zip(upstream)
            .map(|(&y, &u)| u * self.output_activation.derivative(y))
            .collect();
        for layer in (0..n_layers).rev() {
            let n_in = self.layer_sizes[layer];
            let x = &trace.activations[layer];
            let w = &self.weights[layer];
            let gw = &mut grads.weights[layer];
            for (o, &d) in delta.iter().enumerate() {
                grads.biases[layer][o] += d;
                if d != 0.0 {
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    row.iter_mut().zip(x).for_each(|(g, &xi)| *g += d * xi);
                }
            }
            let mut prev = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    prev.iter_mut().zip(row).for_each(|(p, &wi)| *p += d * wi);
                }
            }
            if layer > 0 {
                for (p, &y) in prev.iter_mut().zip(x) {
                    *p *= self.hidden_activation.derivative(y);
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Caches the first-layer contribution of `prefix` (the leading inputs).
    pub fn prefix_cache(&self, prefix: &[f64]) -> Result<PrefixCache> {
        let n_in = self.input_dim();
        if prefix.len() > n_in {
            return Err(NnError::InputDim {
                expected: n_in,
                actual: prefix.len(),
            });
        }
        let w = &self.weights[0];
        let partial = self.biases[0]
            .iter()
            .enumerate()
            .map(|(o, b)| b + dot(&w[o * n_in..o * n_in + prefix.len()], prefix))
            .collect();
        Ok(PrefixCache {
            prefix_len: prefix.len(),
            partial,
        })
    }

    /// Equivalent to `forward([prefix ; suffix])` for the prefix held in `cache`.
    pub fn forward_with_prefix(&self, cache: &PrefixCache, suffix: &[f64]) -> Result<Vec<f64>> {
        let n_in = self.input_dim();
        if cache.prefix_len + suffix.len() != n_in {
            return Err(NnError::InputDim {
                expected: n_in,
                actual: cache.prefix_len + suffix.len(),
            });
        }
        let w = &self.weights[0];
        let mut x: Vec<f64> = cache
            .partial
            .iter()
            .enumerate()
            .map(|(o, p)| p + dot(&w[o * n_in + cache.prefix_len..(o + 1) * n_in], suffix))
            .collect();
        self.activate(0, &mut x);
        for layer in 1..self.num_layers() {
            let mut z = self.affine(layer, &x);
            self.activate(layer, &mut z);
            x = z;
        }
        Ok(x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
