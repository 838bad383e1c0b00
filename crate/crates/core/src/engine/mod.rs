//! Training orchestration: vanilla training, auxiliary-head fitting, the
//! alternating mask/aux loop with temperature annealing, mask selection and
//! finetuning of the extracted subnetwork.

mod bise;
mod trace;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::OptimizerConfig;
use crate::objective::GroupWeights;

pub use bise::{
    mask_objective, run_bise, run_bise_multibias, run_bise_unsupervised, train_aux, MaskBatch, MaskStep,
};
pub use trace::{select_mask, EpochRecord, MaskTrace, TraceMeta};
pub use train::{finetune, train_vanilla, FinetuneOutcome};

/// Vanilla training (plain cross-entropy over all parameters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VanillaConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for VanillaConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            optimizer: OptimizerConfig::adam(1e-3, 1e-4),
            seed: 0,
        }
    }
}

/// Finetuning of a structurally pruned subnetwork with the reweighted loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// `None`: weights from the training set's empirical aligned fractions.
    pub weights: Option<GroupWeights>,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 256,
            optimizer: OptimizerConfig::adam(1e-3, 1e-4),
            weights: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BiseMode {
    #[default]
    Supervised,
    /// Bias labels replaced by a briefly trained identifier's predictions.
    Unsupervised,
}

/// Hyperparameters of mask learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiseConfig {
    /// `E`: epochs of the initial aux-head fit.
    pub aux_epochs: usize,
    /// Aux epochs after each anneal event; `None` means `aux_epochs`.
    pub aux_refinetune_epochs: Option<usize>,
    pub gamma: f64,
    pub kappa: f64,
    pub upsilon: usize,
    pub tau_min: f64,
    /// Keep threshold on the soft gate.
    pub zeta: f64,
    pub mask_optimizer: OptimizerConfig,
    /// Apply the mask optimizer's weight decay to `m`.
    pub mask_weight_decay: bool,
    pub aux_optimizer: OptimizerConfig,
    pub batch_size: usize,
    /// Compute the mutual-information term over bias-conflicting samples only.
    pub restrict_mi_to_conflicting: bool,
    /// Draw a separate minibatch for each aux step instead of reusing the
    /// mask step's batch and forward pass.
    pub resample_aux_batch: bool,
    /// `None`: group weights from the training set's empirical aligned fractions.
    pub weights: Option<GroupWeights>,
    pub mode: BiseMode,
    pub identifier_epochs: usize,
    pub identifier_optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for BiseConfig {
    fn default() -> Self {
        Self {
            aux_epochs: 50,
            aux_refinetune_epochs: None,
            gamma: 1.0,
            kappa: 0.5,
            upsilon: 10,
            tau_min: 1e-3,
            zeta: 0.5,
            mask_optimizer: OptimizerConfig::sgd(1e-2, 0.9, 1e-4),
            mask_weight_decay: true,
            aux_optimizer: OptimizerConfig::sgd(0.1, 0.9, 1e-4),
            batch_size: 256,
            restrict_mi_to_conflicting: true,
            resample_aux_batch: false,
            weights: None,
            mode: BiseMode::Supervised,
            identifier_epochs: 1,
            identifier_optimizer: OptimizerConfig::adam(1e-3, 1e-4),
            seed: 0,
        }
    }
}

impl BiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::param(format!("kappa must lie in (0, 1), got {}", self.kappa)));
        }
        if !(self.tau_min > 0.0 && self.tau_min < 1.0) {
            return Err(Error::param(format!("tau_min must lie in (0, 1), got {}", self.tau_min)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::param(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if self.aux_epochs == 0 {
            return Err(Error::param("aux_epochs must be at least 1"));
        }
        if self.upsilon == 0 || self.batch_size == 0 {
            return Err(Error::param("upsilon and batch_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return Err(Error::param("zeta must lie in [0, 1]"));
        }
        self.mask_optimizer.validate()?;
        self.aux_optimizer.validate()?;
        self.identifier_optimizer.validate()
    }

    /// Mask-training epochs implied by the schedule: `υ·⌈log τ_min / log κ⌉`
    /// (computed by iterating the schedule, not by floating-point logs).
    pub fn scheduled_epochs(&self) -> usize {
        let mut tau = 1.0;
        let mut n = 0;
        while tau >= self.tau_min {
            tau *= self.kappa;
            n += 1;
        }
        n * self.upsilon
    }

    pub(crate) fn refinetune_epochs(&self) -> usize {
        self.aux_refinetune_epochs.unwrap_or(self.aux_epochs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_is_one_hundred_epochs() {
        let c = BiseConfig::default();
        c.validate().unwrap();
        assert_eq!(c.scheduled_epochs(), 100);
        let closed = c.upsilon as f64 * (c.tau_min.ln() / c.kappa.ln()).ceil();
        assert_eq!(closed, 100.0);
    }

    #[test]
    fn rejects_out_of_range_settings() {
        for bad in [
            BiseConfig { kappa: 1.0, ..Default::default() },
            BiseConfig { tau_min: 1.0, ..Default::default() },
            BiseConfig { gamma: -0.1, ..Default::default() },
            BiseConfig { aux_epochs: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let c: BiseConfig = serde_json::from_str(r#"{"gamma": 2.0}"#).unwrap();
        assert_eq!(c.gamma, 2.0);
        assert_eq!(c.upsilon, 10);
        assert!(serde_json::from_str::<BiseConfig>(r#"{"gama": 2.0}"#).is_err());
    }
}
