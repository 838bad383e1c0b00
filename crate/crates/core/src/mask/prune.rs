use ndarray::{Array1, Array2, Axis};

use super::BooleanMask;
use crate::error::Result;
use crate::nn::{Dense, Mlp};

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub model: Mlp,
    /// Hidden layers left with no neurons. Their successor then only emits
    /// its bias (passed through its activation).
    pub degenerate_layers: Vec<usize>,
}

/// Physically removes pruned hidden neurons: the neuron's bias, its incoming
/// weight column and its outgoing weight row.
pub fn structural_prune(model: &Mlp, mask: &BooleanMask) -> Result<PruneOutcome> {
    mask.check_model(model)?;
    let offsets = model.hidden_offsets();
    let depth = model.encoder_depth();
    let kept: Vec<Vec<usize>> = (0..depth)
        .map(|k| {
            (0..offsets[k + 1] - offsets[k])
                .filter(|&j| mask.keep[offsets[k] + j])
                .collect()
        })
        .collect();

    let mut layers = Vec::with_capacity(model.layers().len());
    for (l, layer) in model.layers().iter().enumerate() {
        let mut weight: Array2<f64> = layer.weight.clone();
        let mut bias: Array1<f64> = layer.bias.clone();
        if l > 0 {
            weight = weight.select(Axis(0), &kept[l - 1]);
        }
        if l < depth {
            weight = weight.select(Axis(1), &kept[l]);
            bias = bias.select(Axis(0), &kept[l]);
        }
        layers.push(Dense::new(weight, bias, layer.activation)?);
    }
    let degenerate_layers: Vec<usize> = (0..depth).filter(|&k| kept[k].is_empty()).collect();
    for k in &degenerate_layers {
        log::warn!("structural prune removed every neuron of hidden layer {k}");
    }
    Ok(PruneOutcome {
        model: Mlp::from_layers(layers)?,
        degenerate_layers,
    })
}
