//! Run configuration. Every field defaults to the Multi-Color MNIST settings;
//! unknown keys are rejected.

use std::path::{Path, PathBuf};

use bise::analysis::MagnitudeMode;
use bise::engine::{BiseConfig, FinetuneConfig, VanillaConfig};
use bise::nn::OptimizerConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const PRESETS: [&str; 3] = ["multicolor-mnist-paper", "biased-mnist", "synthetic-smoke"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    MulticolorMnist,
    BiasedMnist,
    SyntheticBlobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// Training aligned fraction(s): one value, or `[ρ_L, ρ_R]` for two colors.
    pub rho: Vec<f64>,
    /// Aligned fraction(s) of the test and validation data.
    pub test_rho: Vec<f64>,
    /// Share of the training images held out (recolored at `test_rho`) for
    /// mask selection. Zero means no validation set.
    pub val_fraction: f64,
    /// Fraction of training bias labels replaced by a wrong one.
    pub noise_p: f64,
    /// IDX directory; falls back to `$BISE_MNIST_DIR`, then `data/mnist`.
    pub mnist_dir: Option<PathBuf>,
    pub classes: usize,
    pub n_per_class: usize,
    pub test_n_per_class: usize,
    pub dim: usize,
    pub bias_strength: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::MulticolorMnist,
            rho: vec![0.99, 0.95],
            test_rho: vec![0.1, 0.1],
            val_fraction: 0.0,
            noise_p: 0.0,
            mnist_dir: None,
            classes: 10,
            n_per_class: 500,
            test_n_per_class: 200,
            dim: 40,
            bias_strength: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub zeta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub noise: Vec<f64>,
    /// Target sparsities (fractions) for the magnitude and random baselines.
    pub targets: Vec<f64>,
    pub random_seeds: usize,
    pub magnitude_mode: MagnitudeMode,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            zeta: (0..=10).map(|i| i as f64 / 10.0).collect(),
            gamma: vec![0.0, 0.1, 1.0, 10.0, 100.0],
            noise: vec![0.0, 0.25, 0.5, 0.75],
            targets: vec![0.1, 0.2, 0.3, 0.5, 0.7, 0.9],
            random_seeds: 5,
            magnitude_mode: MagnitudeMode::Global,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub hidden: Vec<usize>,
    pub vanilla: VanillaConfig,
    pub bise: BiseConfig,
    pub finetune: FinetuneConfig,
    pub sweep: SweepSpec,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            hidden: vec![100, 100, 100],
            vanilla: VanillaConfig::default(),
            bise: BiseConfig::default(),
            finetune: FinetuneConfig::default(),
            sweep: SweepSpec::default(),
            seeds: vec![0],
            out: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        match name {
            "multicolor-mnist-paper" => {}
            "biased-mnist" => {
                c.dataset.kind = DatasetKind::BiasedMnist;
                c.dataset.rho = vec![0.99];
                c.dataset.test_rho = vec![0.1];
                c.dataset.val_fraction = 0.1;
            }
            "synthetic-smoke" => {
                c.dataset.kind = DatasetKind::SyntheticBlobs;
                c.dataset.rho = vec![0.95];
                c.dataset.test_rho = vec![0.1];
                c.dataset.n_per_class = 60;
                c.dataset.test_n_per_class = 30;
                c.dataset.dim = 24;
                c.hidden = vec![16, 16];
                c.vanilla.epochs = 5;
                c.vanilla.batch_size = 64;
                c.bise.aux_epochs = 2;
                c.bise.upsilon = 1;
                c.bise.kappa = 0.1;
                c.bise.tau_min = 0.01;
                c.bise.batch_size = 64;
                c.finetune.epochs = 2;
                c.finetune.batch_size = 64;
                c.sweep.gamma = vec![0.0, 1.0];
                c.sweep.noise = vec![0.0, 0.5];
                c.sweep.random_seeds = 2;
            }
            other => {
                return Err(CliError::invalid(format!(
                    "unknown preset {other:?}; available: {}",
                    PRESETS.join(", ")
                )))
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::invalid(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.dataset;
        let axes = match d.kind {
            DatasetKind::MulticolorMnist => 2,
            _ => 1,
        };
        if d.rho.len() != axes || d.test_rho.len() != axes {
            return Err(CliError::invalid(format!(
                "{:?} needs {axes} value(s) in rho and test_rho",
                d.kind
            )));
        }
        if d.rho.iter().chain(&d.test_rho).any(|r| !(0.0..=1.0).contains(r)) {
            return Err(CliError::invalid("aligned fractions must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&d.val_fraction) || !(0.0..=1.0).contains(&d.noise_p) {
            return Err(CliError::invalid("val_fraction must lie in [0, 1) and noise_p in [0, 1]"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(CliError::invalid("hidden layer widths must be positive and non-empty"));
        }
        if self.seeds.is_empty() {
            return Err(CliError::invalid("at least one seed is required"));
        }
        for opt in [self.vanilla.optimizer, self.finetune.optimizer] {
            check_optimizer(opt)?;
        }
        self.bise.validate()?;
        Ok(())
    }
}

fn check_optimizer(o: OptimizerConfig) -> Result<(), CliError> {
    o.validate().map_err(CliError::from)
}
