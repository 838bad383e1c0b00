//! Losses for mask learning: group-reweighted cross-entropy, the auxiliary
//! bias cross-entropy, a differentiable mutual-information estimate, and the
//! composite objective `J = L_r + γ·Σ Î(b̂, b)`.

mod aux;
mod mi;
mod weights;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::nn::loss;

pub use aux::{aux_ce, AuxHead};
pub use mi::{entropy, soft_mutual_information, MiOutput, MI_EPS};
pub use weights::{four_group_weights, multi_bias_weights, two_group_weights, GroupWeights};

/// `(1/N) Σ_j r_j·CE(ŷ_j, y_j)` and its logit gradient.
pub fn reweighted_ce(logits: ArrayView2<f64>, labels: &[usize], weights: &[f64]) -> Result<(f64, Array2<f64>)> {
    loss::weighted_cross_entropy(logits, labels, weights)
}

/// Pulls a gradient w.r.t. softmax outputs back to the logits:
/// `∂/∂z = p ⊙ (g − Σ_j p_j g_j)`.
pub fn softmax_backward(probs: ArrayView2<f64>, grad_probs: ArrayView2<f64>) -> Array2<f64> {
    let dot = (&probs * &grad_probs).sum_axis(Axis(1)).insert_axis(Axis(1));
    &probs * &(&grad_probs - &dot)
}

/// One mutual-information term: a bias head's probabilities, the bias labels
/// it is scored against, and an optional sample selection.
#[derive(Debug, Clone, Copy)]
pub struct MiTerm<'a> {
    pub probs: ArrayView2<'a, f64>,
    pub bias: &'a [usize],
    pub select: Option<&'a [bool]>,
}

#[derive(Debug, Clone)]
pub struct Composite {
    pub value: f64,
    pub reweighted_ce: f64,
    pub mi: Vec<f64>,
    /// Samples used by each MI term; zero means the term was skipped.
    pub mi_samples: Vec<usize>,
    pub grad_logits: Array2<f64>,
    /// `γ·∂Î/∂probs` per term.
    pub grad_probs: Vec<Array2<f64>>,
}

/// `J = L_r + γ·Σ_t Î_t`.
pub fn composite_objective(
    logits: ArrayView2<f64>,
    labels: &[usize],
    weights: &[f64],
    terms: &[MiTerm<'_>],
    gamma: f64,
) -> Result<Composite> {
    if !(gamma >= 0.0) {
        return Err(Error::param(format!("gamma must be non-negative, got {gamma}")));
    }
    let (lr, grad_logits) = reweighted_ce(logits, labels, weights)?;
    let mut value = lr;
    let mut mi = Vec::with_capacity(terms.len());
    let mut mi_samples = Vec::with_capacity(terms.len());
    let mut grad_probs = Vec::with_capacity(terms.len());
    for t in terms {
        let out = soft_mutual_information(t.probs, t.bias, t.select)?;
        value += gamma * out.value;
        mi.push(out.value);
        mi_samples.push(out.samples);
        grad_probs.push(out.grad * gamma);
    }
    Ok(Composite {
        value,
        reweighted_ce: lr,
        mi,
        mi_samples,
        grad_logits,
        grad_probs,
    })
}
