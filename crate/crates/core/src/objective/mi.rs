use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Clamp applied to probabilities inside logarithms.
pub const MI_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MiOutput {
    /// Plug-in mutual information in nats.
    pub value: f64,
    /// `∂Î/∂probs`, zero on rows outside the selection.
    pub grad: Array2<f64>,
    /// Number of samples the estimate used.
    pub samples: usize,
}

/// Soft plug-in estimate of `I(b̂; b)`.
///
/// The joint is `P(j, k) = (1/N') Σ_n probs[n, j]·1{b_n = k}` over the selected
/// samples (all of them when `select` is `None`); the estimate is
/// `Σ P log(P/(P_row P_col))` with every probability clamped at [`MI_EPS`]
/// inside the logs. With one-hot rows it equals the plug-in MI of the
/// empirical contingency table. An empty selection yields zero.
pub fn soft_mutual_information(
    probs: ArrayView2<f64>,
    bias: &[usize],
    select: Option<&[bool]>,
) -> Result<MiOutput> {
    let (n, k) = probs.dim();
    if bias.len() != n {
        return Err(Error::dim(format!("{} bias labels for {n} rows", bias.len())));
    }
    if let Some(s) = select {
        if s.len() != n {
            return Err(Error::dim("selection length differs from batch size"));
        }
    }
    if bias.iter().any(|&b| b >= k) {
        return Err(Error::param("bias label outside the probability columns"));
    }
    let used: Vec<usize> = (0..n).filter(|&i| select.is_none_or(|s| s[i])).collect();
    let mut grad = Array2::zeros((n, k));
    if used.is_empty() {
        return Ok(MiOutput {
            value: 0.0,
            grad,
            samples: 0,
        });
    }
    let inv = 1.0 / used.len() as f64;
    let mut joint = Array2::<f64>::zeros((k, k));
    for &i in &used {
        let b = bias[i];
        for j in 0..k {
            joint[[j, b]] += probs[[i, j]] * inv;
        }
    }
    let row: Vec<f64> = (0..k).map(|j| joint.row(j).sum()).collect();
    let col: Vec<f64> = (0..k).map(|c| joint.column(c).sum()).collect();
    let lc = |x: f64| x.max(MI_EPS).ln();
    let on = |x: f64| if x >= MI_EPS { 1.0 } else { 0.0 };

    let mut value = 0.0;
    let mut d_joint = Array2::<f64>::zeros((k, k));
    for j in 0..k {
        for c in 0..k {
            let p = joint[[j, c]];
            let log_ratio = lc(p) - lc(row[j]) - lc(col[c]);
            value += p * log_ratio;
            d_joint[[j, c]] = log_ratio + on(p) - on(row[j]) - on(col[c]);
        }
    }
    for &i in &used {
        let b = bias[i];
        for j in 0..k {
            grad[[i, j]] = inv * d_joint[[j, b]];
        }
    }
    Ok(MiOutput {
        value,
        grad,
        samples: used.len(),
    })
}

/// Entropy (nats) of a discrete distribution.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}
