use rand::seq::SliceRandom;

use super::{FinetuneConfig, VanillaConfig};
use crate::analysis::evaluate;
use crate::data::BiasedDataset;
use crate::error::{Error, Result};
use crate::nn::{loss, BackwardOptions, Mlp, Optimizer, OptimizerConfig};
use crate::objective::GroupWeights;
use crate::seed::{self, Rng};

/// Shuffled minibatches covering every sample once; the last one may be short.
pub(crate) fn epoch_batches(n: usize, batch: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

/// Minibatch training of every parameter on (optionally weighted) cross-entropy.
pub(crate) fn fit_supervised(
    model: &mut Mlp,
    ds: &BiasedDataset,
    weights: Option<&[f64]>,
    epochs: usize,
    batch_size: usize,
    optimizer: OptimizerConfig,
    rng: &mut Rng,
    mut after_epoch: impl FnMut(usize, &Mlp) -> Result<()>,
) -> Result<()> {
    optimizer.validate()?;
    if ds.input_dim() != model.input_dim() || ds.num_classes() != model.output_dim() {
        return Err(Error::dim("dataset does not match the model's input or output width"));
    }
    let mut opt = Optimizer::new(optimizer);
    let labels = ds.labels();
    for epoch in 1..=epochs {
        let mut total = 0.0;
        for idx in epoch_batches(ds.len(), batch_size, rng) {
            let x = ds.batch(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let fwd = model.forward(x.view(), None)?;
            let (value, grad) = match weights {
                Some(w) => {
                    let w: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
                    loss::weighted_cross_entropy(fwd.logits.view(), &y, &w)?
                }
                None => loss::cross_entropy(fwd.logits.view(), &y)?,
            };
            if !value.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("loss became {value}"),
                });
            }
            total += value * idx.len() as f64;
            let back = model.backward(
                &fwd.tape,
                grad.view(),
                None,
                BackwardOptions {
                    params: true,
                    gates: false,
                },
            )?;
            let grads = back.params.expect("parameter gradients requested");
            opt.step(&mut model.param_slices_mut(), &grads.slices())?;
        }
        log::debug!("epoch {epoch}: mean loss {:.5}", total / ds.len().max(1) as f64);
        after_epoch(epoch, model)?;
    }
    Ok(())
}

/// Trains a fresh He-initialised ReLU network with plain cross-entropy.
pub fn train_vanilla(ds: &BiasedDataset, hidden: &[usize], config: &VanillaConfig) -> Result<Mlp> {
    let mut model = Mlp::new(ds.input_dim(), hidden, ds.num_classes(), &mut seed::stream(config.seed, "init"));
    let mut rng = seed::stream(config.seed, "shuffle");
    fit_supervised(
        &mut model,
        ds,
        None,
        config.epochs,
        config.batch_size,
        config.optimizer,
        &mut rng,
        |_, _| Ok(()),
    )?;
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub model: Mlp,
    /// Epoch whose weights were returned (`0` when no epoch ran).
    pub selected_epoch: usize,
    /// Validation accuracy after each epoch, when a validation set was given.
    pub val_accuracy: Vec<f64>,
}

/// Trains every surviving parameter of a pruned network on the reweighted
/// cross-entropy. Returns the epoch with the best validation accuracy (first
/// one on ties) when `val` is given, otherwise the last epoch.
pub fn finetune(
    pruned: &Mlp,
    train: &BiasedDataset,
    val: Option<&BiasedDataset>,
    config: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    let weights = config
        .weights
        .unwrap_or_else(|| GroupWeights::empirical(train))
        .per_sample(train)?;
    let mut model = pruned.clone();
    let mut rng = seed::stream(config.seed, "finetune");
    let mut best: Option<(f64, usize, Mlp)> = None;
    let mut history = Vec::new();
    fit_supervised(
        &mut model,
        train,
        Some(&weights),
        config.epochs,
        config.batch_size,
        config.optimizer,
        &mut rng,
        |epoch, m| {
            if let Some(v) = val {
                let acc = evaluate(m, None, v)?.overall;
                history.push(acc);
                if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                    best = Some((acc, epoch, m.clone()));
                }
            }
            Ok(())
        },
    )?;
    Ok(match best {
        Some((_, epoch, m)) => FinetuneOutcome {
            model: m,
            selected_epoch: epoch,
            val_accuracy: history,
        },
        None => FinetuneOutcome {
            model,
            selected_epoch: config.epochs,
            val_accuracy: history,
        },
    })
}
