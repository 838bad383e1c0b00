use ndarray::{Array2, ArrayView2};

use crate::error::Result;
use crate::nn::{loss, Dense, Optimizer, OptimizerConfig};
use crate::seed::Rng;

/// Linear bias classifier `d → |B|` on the encoder bottleneck, with its own
/// optimizer state.
#[derive(Debug, Clone)]
pub struct AuxHead {
    pub layer: Dense,
    optimizer: Optimizer,
}

impl AuxHead {
    pub fn new(input: usize, classes: usize, config: OptimizerConfig, rng: &mut Rng) -> Self {
        Self {
            layer: Dense::linear_default(input, classes, rng),
            optimizer: Optimizer::new(config),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer.input_dim()
    }

    pub fn classes(&self) -> usize {
        self.layer.output_dim()
    }

    pub fn logits(&self, z: ArrayView2<f64>) -> Array2<f64> {
        let mut out = z.dot(&self.layer.weight);
        out += &self.layer.bias;
        out
    }

    pub fn probs(&self, z: ArrayView2<f64>) -> Array2<f64> {
        loss::softmax(self.logits(z).view())
    }

    /// Gradient w.r.t. the head input for a given logit gradient.
    pub fn input_grad(&self, grad_logits: ArrayView2<f64>) -> Array2<f64> {
        grad_logits.dot(&self.layer.weight.t())
    }

    /// One optimizer step on the unweighted bias cross-entropy; returns the
    /// pre-step loss.
    pub fn train_step(&mut self, z: ArrayView2<f64>, bias: &[usize]) -> Result<f64> {
        let (value, grad) = aux_ce(self.logits(z).view(), bias)?;
        let gw = z.t().dot(&grad);
        let gb = grad.sum_axis(ndarray::Axis(0));
        let w = self.layer.weight.as_slice_mut().expect("standard layout");
        let b = self.layer.bias.as_slice_mut().expect("standard layout");
        self.optimizer.step(
            &mut [w, b],
            &[gw.as_slice().expect("standard layout"), gb.as_slice().expect("standard layout")],
        )?;
        Ok(value)
    }

    /// Zeroes the optimizer buffers, keeping the weights.
    pub fn reset_optimizer(&mut self) {
        self.optimizer.reset();
    }
}

/// Unweighted mean cross-entropy of the bias head and its logit gradient.
pub fn aux_ce(logits: ArrayView2<f64>, bias: &[usize]) -> Result<(f64, Array2<f64>)> {
    loss::cross_entropy(logits, bias)
}
