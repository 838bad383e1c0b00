//! Sparsity and FLOPs accounting, group-aware evaluation, pruning baselines,
//! sweeps and the bias-extractability probe.
//!
//! Accounting follows structural removal: dropping hidden neuron `j` removes
//! its bias, its incoming weights from surviving inputs and its outgoing
//! weights to surviving successors, each parameter counted once. FLOPs are
//! multiply-accumulates of the dense layers; bias additions and activations are
//! not counted. Accuracies are fractions in `[0, 1]`.

mod baselines;
mod eval;
mod probe;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mask::BooleanMask;
use crate::nn::Mlp;

pub use baselines::{
    magnitude_prune, neuron_norms, prune_by_order, random_prune, ranking_prune, sweep_csv,
    threshold_sweep, MagnitudeMode, SweepRow,
};
pub use eval::{evaluate, evaluate_predictions, first_hidden_activations, CachedEval, EvalReport, GroupAccuracy};
pub use probe::{gamma_sweep, probe_bias_extractability, GammaRow, ProbeConfig, ProbeReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    /// Percentage of dense parameters removed.
    pub sparsity_percent: f64,
    /// Multiply-accumulates of one forward pass of the pruned network.
    pub flops: u64,
    pub params_total: usize,
    pub params_removed: usize,
    pub kept_per_layer: Vec<usize>,
    pub degenerate_layers: Vec<usize>,
}

fn widths(model: &Mlp, kept: &[usize]) -> Vec<usize> {
    let mut a = Vec::with_capacity(kept.len() + 2);
    a.push(model.input_dim());
    a.extend_from_slice(kept);
    a.push(model.output_dim());
    a
}

fn remaining_params(a: &[usize]) -> usize {
    a.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn macs(a: &[usize]) -> u64 {
    a.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
}

/// Accounting for a given kept-neuron count per hidden layer.
pub fn report_for_counts(model: &Mlp, kept: &[usize]) -> PruneReport {
    let total = model.param_count();
    let a = widths(model, kept);
    let removed = total - remaining_params(&a);
    PruneReport {
        sparsity_percent: 100.0 * removed as f64 / total as f64,
        flops: macs(&a),
        params_total: total,
        params_removed: removed,
        kept_per_layer: kept.to_vec(),
        degenerate_layers: (0..kept.len()).filter(|&k| kept[k] == 0).collect(),
    }
}

pub fn sparsity(model: &Mlp, mask: &BooleanMask) -> Result<PruneReport> {
    mask.check_model(model)?;
    Ok(report_for_counts(model, &mask.kept_per_layer()))
}

pub fn flops(model: &Mlp, mask: &BooleanMask) -> Result<u64> {
    Ok(sparsity(model, mask)?.flops)
}

/// MACs of the unpruned model.
pub fn dense_flops(model: &Mlp) -> u64 {
    macs(&widths(model, &model.hidden_dims()))
}
