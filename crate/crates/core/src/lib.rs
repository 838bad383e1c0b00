//! Bias-invariant subnetwork extraction for dense ReLU networks.
//!
//! A vanilla-trained [`nn::Mlp`] is kept frozen while one trainable gate per
//! hidden neuron is learned. Gates are hard-thresholded in the forward pass and
//! trained with a straight-through estimator; the objective combines a
//! group-reweighted cross-entropy with a mutual-information penalty measured by
//! an auxiliary bias classifier attached to the encoder bottleneck. Pruned
//! neurons can then be removed physically, yielding a smaller dense network.
//!
//! Module map:
//!
//! - [`nn`]: dense layers, forward/backward passes, SGD and Adam, checkpoints.
//! - [`mask`]: gate functions, temperature annealing, structural pruning.
//! - [`data`]: MNIST IDX loading and biased-benchmark builders.
//! - [`objective`]: group weights, reweighted CE, soft mutual information.
//! - [`engine`]: vanilla training, the mask-learning loop, finetuning.
//! - [`analysis`]: sparsity/FLOPs accounting, evaluation, baselines and sweeps.

pub mod analysis;
pub mod data;
pub mod engine;
pub mod error;
pub mod mask;
pub mod nn;
pub mod objective;
pub mod seed;

pub use error::{Error, Result};
