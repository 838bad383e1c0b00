//! Minimal dense-network engine in `f64`.
//!
//! Weights are stored `[in × out]`, so a batch `X` of shape `[N × in]` maps to
//! `X·W + b`. Every layer except the last is a hidden layer of the encoder; the
//! last layer is the linear classifier head. Hidden neurons are numbered
//! globally in layer order, which is the indexing used by gate vectors and
//! masks throughout the crate.

mod checkpoint;
mod forward;
pub mod loss;
pub mod optim;

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointMeta};
pub use forward::{Backward, BackwardOptions, Forward, Gradients, Tape};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};

use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::None => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::None),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[in × out]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if weight.ncols() != bias.len() {
            return Err(Error::dim(format!(
                "weight has {} outputs but bias has {}",
                weight.ncols(),
                bias.len()
            )));
        }
        // Selections along columns can yield column-major storage.
        Ok(Self {
            weight: weight.as_standard_layout().into_owned(),
            bias: bias.as_standard_layout().into_owned(),
            activation,
        })
    }

    /// He-uniform weights (`U(±sqrt(6/fan_in))`), zero bias.
    pub fn he_uniform(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = if input == 0 { 0.0 } else { (6.0 / input as f64).sqrt() };
        Self::uniform(input, output, limit, 0.0, activation, rng)
    }

    /// `U(±1/sqrt(fan_in))` for weights and bias, the usual default for a
    /// freshly attached linear head.
    pub fn linear_default(input: usize, output: usize, rng: &mut Rng) -> Self {
        let limit = if input == 0 { 0.0 } else { 1.0 / (input as f64).sqrt() };
        Self::uniform(input, output, limit, limit, Activation::None, rng)
    }

    fn uniform(
        input: usize,
        output: usize,
        weight_limit: f64,
        bias_limit: f64,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        let mut sample = |limit: f64| {
            if limit > 0.0 {
                Uniform::new(-limit, limit).sample(rng)
            } else {
                0.0
            }
        };
        let weight = Array2::from_shape_simple_fn((input, output), || sample(weight_limit));
        let bias = Array1::from_shape_simple_fn(output, || sample(bias_limit));
        Self {
            weight,
            bias,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Encoder (hidden layers) followed by a linear classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// Builds a model from layers; the last one is the classifier head.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::dim("a model needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::dim(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    k + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// He-initialised ReLU network `input → hidden... → output`.
    pub fn new(input: usize, hidden: &[usize], output: usize, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &width in hidden {
            layers.push(Dense::he_uniform(prev, width, Activation::Relu, rng));
            prev = width;
        }
        layers.push(Dense::he_uniform(prev, output, Activation::None, rng));
        Self { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Number of encoder layers; the classifier head sits at this index.
    pub fn encoder_depth(&self) -> usize {
        self.layers.len() - 1
    }

    /// Bottleneck width `d` (the classifier's input dimension).
    pub fn bottleneck_dim(&self) -> usize {
        self.layers[self.encoder_depth()].input_dim()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers[..self.encoder_depth()]
            .iter()
            .map(Dense::output_dim)
            .collect()
    }

    /// Total number of gateable hidden neurons.
    pub fn hidden_count(&self) -> usize {
        self.hidden_dims().iter().sum()
    }

    /// Global index of the first neuron of each hidden layer, plus the total.
    pub fn hidden_offsets(&self) -> Vec<usize> {
        let mut offsets = vec![0];
        for w in self.hidden_dims() {
            offsets.push(offsets.last().unwrap() + w);
        }
        offsets
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Parameters as flat slices in `[w0, b0, w1, b1, ...]` order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Class predictions (`argmax` of logits, lowest index on ties).
    pub fn predict(&self, input: ndarray::ArrayView2<f64>, gates: Option<&[f64]>) -> Result<Vec<usize>> {
        let fwd = self.forward(input, gates)?;
        Ok(loss::argmax_rows(fwd.logits.view()))
    }
}
