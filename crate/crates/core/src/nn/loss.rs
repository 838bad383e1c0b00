//! Softmax and cross-entropy on logit batches.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Row-wise softmax.
pub fn softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Index of the largest entry of each row; the lowest index wins ties.
pub fn argmax_rows(x: ArrayView2<f64>) -> Vec<usize> {
    x.axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Per-sample cross-entropy `-log softmax(z)_y` and the softmax itself.
pub fn per_sample_cross_entropy(
    logits: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(Vec<f64>, Array2<f64>)> {
    if logits.nrows() != labels.len() {
        return Err(Error::dim(format!(
            "{} logit rows for {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let classes = logits.ncols();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::param(format!("label {bad} out of range for {classes} classes")));
    }
    let probs = softmax(logits);
    let losses = logits
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .collect();
    Ok((losses, probs))
}

/// `(1/N) Σ_j w_j ℓ_j` and its gradient with respect to the logits.
pub fn weighted_cross_entropy(
    logits: ArrayView2<f64>,
    labels: &[usize],
    weights: &[f64],
) -> Result<(f64, Array2<f64>)> {
    if weights.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} weights for a batch of {}",
            weights.len(),
            labels.len()
        )));
    }
    let (losses, mut grad) = per_sample_cross_entropy(logits, labels)?;
    let n = labels.len().max(1) as f64;
    let loss = losses.iter().zip(weights).map(|(l, w)| l * w).sum::<f64>() / n;
    for ((mut row, &y), &w) in grad.axis_iter_mut(Axis(0)).zip(labels).zip(weights) {
        row[y] -= 1.0;
        row *= w / n;
    }
    Ok((loss, grad))
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    weighted_cross_entropy(logits, labels, &vec![1.0; labels.len()])
}
