use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{BooleanMask, MaskSet};
use crate::objective::GroupWeights;

/// State of mask learning at the end of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Temperature in effect during the epoch.
    pub tau: f64,
    pub m: Vec<f64>,
    pub keep: Vec<bool>,
    pub train_objective: f64,
    pub train_ce: f64,
    /// Mean MI estimate per bias axis over batches where it was computed.
    pub train_mi: Vec<f64>,
    pub val_accuracy: Option<f64>,
    pub sparsity_percent: f64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TraceMeta {
    pub weights: Option<GroupWeights>,
    /// Aligned fraction of the identifier's pseudo bias labels.
    pub pseudo_aligned_fraction: Option<Vec<f64>>,
    /// Batches in which an MI term had no selected sample.
    pub mi_skipped_batches: usize,
    /// Training accuracy of the aux heads (mean over axes) after each fit.
    pub aux_accuracy: Vec<f64>,
    /// Epochs after which the temperature was annealed.
    pub anneal_epochs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskTrace {
    pub epochs: Vec<EpochRecord>,
    /// Gate parameters and schedule state after the last epoch.
    pub mask_set: MaskSet,
    pub zeta: f64,
    pub meta: TraceMeta,
}

impl MaskTrace {
    fn mask_of(&self, rec: &EpochRecord) -> Result<BooleanMask> {
        let mut mask = BooleanMask::from_keep(rec.keep.clone(), self.mask_set.layer_sizes().to_vec())?;
        mask.tau = Some(rec.tau);
        mask.zeta = Some(self.zeta);
        Ok(mask)
    }

    pub fn last_mask(&self) -> Result<BooleanMask> {
        let rec = self
            .epochs
            .last()
            .ok_or_else(|| Error::State("mask trace has no epochs".into()))?;
        self.mask_of(rec)
    }

    /// Index of the epoch with the highest validation accuracy (earliest on
    /// ties), if any epoch was validated.
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in self.epochs.iter().enumerate() {
            if let Some(a) = r.val_accuracy {
                if best.is_none_or(|(_, b)| a > b) {
                    best = Some((i, a));
                }
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Mask with the best validation accuracy when `use_val` is set and the trace
/// was validated, otherwise the last epoch's mask.
pub fn select_mask(trace: &MaskTrace, use_val: bool) -> Result<BooleanMask> {
    if trace.epochs.is_empty() {
        return Err(Error::State("mask trace has no epochs".into()));
    }
    match trace.best_index().filter(|_| use_val) {
        Some(i) => trace.mask_of(&trace.epochs[i]),
        None => trace.last_mask(),
    }
}
