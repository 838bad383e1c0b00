use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CachedEval, EvalReport};
use crate::data::BiasedDataset;
use crate::engine::{run_bise, BiseConfig};
use crate::error::Result;
use crate::nn::{loss, Mlp, OptimizerConfig};
use crate::objective::AuxHead;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            optimizer: OptimizerConfig::sgd(0.1, 0.9, 1e-4),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

fn accuracy(head: &AuxHead, z: &Array2<f64>, bias: &[usize]) -> f64 {
    let pred = loss::argmax_rows(head.logits(z.view()).view());
    pred.iter().zip(bias).filter(|(p, b)| p == b).count() as f64 / bias.len().max(1) as f64
}

/// Trains a fresh linear probe to predict the (first-axis) bias label from
/// the encoder output and reports its accuracy. `gates` selects the
/// subnetwork; `None` probes the dense encoder.
pub fn probe_bias_extractability(
    model: &Mlp,
    gates: Option<&[f64]>,
    train: &BiasedDataset,
    test: &BiasedDataset,
    config: &ProbeConfig,
) -> Result<ProbeReport> {
    let z_train = CachedEval::new(model, train)?.bottleneck(gates)?;
    let z_test = CachedEval::new(model, test)?.bottleneck(gates)?;
    let mut rng = seed::stream(config.seed, "probe");
    let mut head = AuxHead::new(model.bottleneck_dim(), train.num_bias(), config.optimizer, &mut rng);
    let bias = train.bias(0);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size.max(1)) {
            let z = z_train.select(ndarray::Axis(0), idx);
            let b: Vec<usize> = idx.iter().map(|&i| bias[i]).collect();
            head.train_step(z.view(), &b)?;
        }
    }
    Ok(ProbeReport {
        train_accuracy: accuracy(&head, &z_train, bias),
        test_accuracy: accuracy(&head, &z_test, test.bias(0)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub sparsity_percent: f64,
    pub flops: u64,
    pub last: EvalReport,
}

/// Runs mask learning once per `γ` and scores the last mask.
pub fn gamma_sweep(
    model: &Mlp,
    train: &BiasedDataset,
    test: &BiasedDataset,
    gammas: &[f64],
    config: &BiseConfig,
) -> Result<Vec<GammaRow>> {
    let eval = CachedEval::new(model, test)?;
    gammas
        .iter()
        .map(|&gamma| {
            let cfg = BiseConfig { gamma, ..config.clone() };
            let trace = run_bise(model, train, None, &cfg)?;
            let mask = trace.last_mask()?;
            let report = super::sparsity(model, &mask)?;
            Ok(GammaRow {
                gamma,
                sparsity_percent: report.sparsity_percent,
                flops: report.flops,
                last: eval.evaluate(Some(&mask.gates()))?,
            })
        })
        .collect()
}
