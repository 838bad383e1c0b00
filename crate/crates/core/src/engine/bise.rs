use ndarray::{Array2, ArrayView2, Axis};

use super::train::epoch_batches;
use super::{BiseConfig, BiseMode, EpochRecord, MaskTrace, TraceMeta, VanillaConfig};
use crate::analysis::{self, first_hidden_activations, CachedEval};
use crate::data::{assign_pseudo_bias, BiasedDataset};
use crate::error::{Error, Result};
use crate::mask::{GateMode, MaskSet};
use crate::nn::{loss, BackwardOptions, Mlp, Optimizer};
use crate::objective::{composite_objective, softmax_backward, AuxHead, Composite, GroupWeights, MiTerm};
use crate::seed::{self, Rng};

/// Fits a bias head on fixed bottleneck features for `epochs` passes and
/// returns its training accuracy afterwards.
pub fn train_aux(
    head: &mut AuxHead,
    z: ArrayView2<f64>,
    bias: &[usize],
    epochs: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if z.nrows() != bias.len() {
        return Err(Error::dim("bottleneck rows and bias labels differ in count"));
    }
    for epoch in 1..=epochs {
        for idx in epoch_batches(z.nrows(), batch_size, rng) {
            let zb = z.select(Axis(0), &idx);
            let b: Vec<usize> = idx.iter().map(|&i| bias[i]).collect();
            let l = head.train_step(zb.view(), &b)?;
            if !l.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("aux loss became {l}"),
                });
            }
        }
    }
    let pred = loss::argmax_rows(head.logits(z).view());
    let hits = pred.iter().zip(bias).filter(|(p, b)| p == b).count();
    Ok(hits as f64 / bias.len().max(1) as f64)
}

/// Learns neuron gates on a frozen model. Dispatches on `config.mode`; with one
/// or two bias axes in `train` the MI penalty gets one term per axis.
/// `val` (true labels) is only used to record per-epoch accuracy.
pub fn run_bise(
    model: &Mlp,
    train: &BiasedDataset,
    val: Option<&BiasedDataset>,
    config: &BiseConfig,
) -> Result<MaskTrace> {
    match config.mode {
        BiseMode::Supervised => learn_masks(model, train, val, config, TraceMeta::default()),
        BiseMode::Unsupervised => run_bise_unsupervised(model, train, val, config),
    }
}

/// [`run_bise`] on a dataset that must carry two bias attributes.
pub fn run_bise_multibias(
    model: &Mlp,
    train: &BiasedDataset,
    val: Option<&BiasedDataset>,
    config: &BiseConfig,
) -> Result<MaskTrace> {
    if train.bias_axes() != 2 {
        return Err(Error::param(format!(
            "multi-bias training needs two bias attributes, dataset has {}",
            train.bias_axes()
        )));
    }
    run_bise(model, train, val, config)
}

/// Replaces the bias labels by the predictions of a briefly trained identifier
/// network before learning the gates.
pub fn run_bise_unsupervised(
    model: &Mlp,
    train: &BiasedDataset,
    val: Option<&BiasedDataset>,
    config: &BiseConfig,
) -> Result<MaskTrace> {
    if train.bias_axes() != 1 {
        return Err(Error::param("pseudo bias labels support a single bias attribute"));
    }
    let identifier = super::train_vanilla(
        train,
        &model.hidden_dims(),
        &VanillaConfig {
            epochs: config.identifier_epochs,
            batch_size: config.batch_size,
            optimizer: config.identifier_optimizer,
            seed: seed::derive(config.seed, "identifier"),
        },
    )?;
    let pseudo = assign_pseudo_bias(train, &identifier)?;
    let fraction = pseudo.aligned_fraction();
    log::info!("pseudo bias labels: aligned fraction {:?}", fraction);
    let meta = TraceMeta {
        pseudo_aligned_fraction: Some(fraction),
        ..TraceMeta::default()
    };
    learn_masks(model, &pseudo, val, config, meta)
}

/// One minibatch as seen by the mask objective.
#[derive(Debug, Clone, Copy)]
pub struct MaskBatch<'a> {
    /// Layer the input enters at: 0 for raw features, 1 for cached
    /// first-hidden activations.
    pub start: usize,
    pub input: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    pub weights: &'a [f64],
    /// Bias labels, one vector per bias axis.
    pub bias: &'a [Vec<usize>],
    /// Samples entering each axis' MI term; `None` uses all of them.
    pub select: Option<&'a [Vec<bool>]>,
}

#[derive(Debug, Clone)]
pub struct MaskStep {
    pub objective: Composite,
    /// `∂J/∂m` through the straight-through estimator (exact for soft gates).
    pub grad_m: Vec<f64>,
    pub bottleneck: Array2<f64>,
}

/// Evaluates `J = L_r + γ·Σ Î` on one batch under the given gates and
/// backpropagates it to the gate parameters. Model and heads are read only.
pub fn mask_objective(
    model: &Mlp,
    masks: &MaskSet,
    mode: GateMode,
    heads: &[AuxHead],
    batch: &MaskBatch<'_>,
    gamma: f64,
) -> Result<MaskStep> {
    if heads.len() != batch.bias.len() {
        return Err(Error::dim(format!(
            "{} aux heads for {} bias axes",
            heads.len(),
            batch.bias.len()
        )));
    }
    if batch.select.is_some_and(|s| s.len() != heads.len()) {
        return Err(Error::dim("one MI selection per bias axis required"));
    }
    masks.check_model(model)?;
    let gates = masks.gate_multipliers(mode);
    let fwd = model.forward_from(batch.start, batch.input, Some(&gates))?;
    let z = fwd.bottleneck().to_owned();
    let probs: Vec<Array2<f64>> = heads.iter().map(|h| h.probs(z.view())).collect();
    let terms: Vec<MiTerm<'_>> = (0..heads.len())
        .map(|a| MiTerm {
            probs: probs[a].view(),
            bias: &batch.bias[a],
            select: batch.select.map(|s| &s[a][..]),
        })
        .collect();
    let comp = composite_objective(fwd.logits.view(), batch.labels, batch.weights, &terms, gamma)?;
    let mut grad_z = Array2::<f64>::zeros(z.dim());
    for (a, head) in heads.iter().enumerate() {
        let g = softmax_backward(probs[a].view(), comp.grad_probs[a].view());
        grad_z += &head.input_grad(g.view());
    }
    let back = model.backward(
        &fwd.tape,
        comp.grad_logits.view(),
        Some(grad_z.view()),
        BackwardOptions {
            params: false,
            gates: true,
        },
    )?;
    let grad_m = masks.chain_to_m(&back.gates.expect("gate gradients requested"))?;
    Ok(MaskStep {
        objective: comp,
        grad_m,
        bottleneck: z,
    })
}

fn fit_heads(
    heads: &mut [AuxHead],
    cache: &CachedEval<'_>,
    gates: &[f64],
    ds: &BiasedDataset,
    epochs: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let z = cache.bottleneck(Some(gates))?;
    let mut acc = 0.0;
    for (axis, head) in heads.iter_mut().enumerate() {
        acc += train_aux(head, z.view(), ds.bias(axis), epochs, batch_size, rng)?;
    }
    Ok(acc / heads.len() as f64)
}

fn learn_masks(
    model: &Mlp,
    train: &BiasedDataset,
    val: Option<&BiasedDataset>,
    cfg: &BiseConfig,
    mut meta: TraceMeta,
) -> Result<MaskTrace> {
    cfg.validate()?;
    if model.encoder_depth() == 0 {
        return Err(Error::param("model has no hidden layer to mask"));
    }
    if train.input_dim() != model.input_dim() || train.num_classes() != model.output_dim() {
        return Err(Error::dim("dataset does not match the model's input or output width"));
    }
    if train.is_empty() {
        return Err(Error::param("training set is empty"));
    }
    let axes = train.bias_axes();
    let group_weights = match cfg.weights {
        Some(w) => w,
        None => GroupWeights::empirical(train),
    };
    let weights = group_weights.per_sample(train)?;
    meta.weights = Some(group_weights);

    let mut masks = MaskSet::for_model(model, cfg.kappa, cfg.upsilon, cfg.tau_min)?;
    let mode = GateMode::Hard { zeta: cfg.zeta };
    let mut mask_cfg = cfg.mask_optimizer;
    if !cfg.mask_weight_decay {
        mask_cfg.weight_decay = 0.0;
    }
    let mut mask_opt = Optimizer::new(mask_cfg);

    let mut aux_rng = seed::stream(cfg.seed, "aux");
    let mut heads: Vec<AuxHead> = (0..axes)
        .map(|_| AuxHead::new(model.bottleneck_dim(), train.num_bias(), cfg.aux_optimizer, &mut aux_rng))
        .collect();
    let cache = CachedEval::new(model, train)?;
    let val_cache = val.map(|v| CachedEval::new(model, v)).transpose()?;
    let h0 = first_hidden_activations(model, train)?;

    let acc = fit_heads(
        &mut heads,
        &cache,
        &masks.gate_multipliers(mode),
        train,
        cfg.aux_epochs,
        cfg.batch_size,
        &mut aux_rng,
    )?;
    meta.aux_accuracy.push(acc);

    let labels = train.labels();
    let conflicting: Vec<Vec<bool>> = (0..axes)
        .map(|a| (0..train.len()).map(|i| !train.is_aligned(a, i)).collect())
        .collect();
    let mut shuffle = seed::stream(cfg.seed, "mask");
    let max_epochs = cfg.scheduled_epochs();
    let mut records = Vec::with_capacity(max_epochs);

    for epoch in 1..=max_epochs {
        let tau = masks.tau();
        let mut sums = (0.0, 0.0);
        let mut mi_sum = vec![0.0; axes];
        let mut mi_batches = vec![0usize; axes];
        for idx in epoch_batches(train.len(), cfg.batch_size, &mut shuffle) {
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
            let bias: Vec<Vec<usize>> = (0..axes)
                .map(|a| idx.iter().map(|&i| train.bias(a)[i]).collect())
                .collect();
            let select: Vec<Vec<bool>> = (0..axes)
                .map(|a| idx.iter().map(|&i| conflicting[a][i]).collect())
                .collect();
            let x = h0.select(Axis(0), &idx);
            let batch = MaskBatch {
                start: 1,
                input: x.view(),
                labels: &y,
                weights: &w,
                bias: &bias,
                select: cfg.restrict_mi_to_conflicting.then_some(&select[..]),
            };
            let MaskStep {
                objective: comp,
                grad_m,
                bottleneck: z,
            } = mask_objective(model, &masks, mode, &heads, &batch, cfg.gamma)?;
            if !comp.value.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("objective became {}", comp.value),
                });
            }
            let n = idx.len() as f64;
            sums.0 += comp.value * n;
            sums.1 += comp.reweighted_ce * n;
            for a in 0..axes {
                if comp.mi_samples[a] == 0 {
                    meta.mi_skipped_batches += 1;
                } else {
                    mi_sum[a] += comp.mi[a];
                    mi_batches[a] += 1;
                }
            }
            mask_opt.step(&mut [masks.values_mut()], &[&grad_m])?;

            if cfg.resample_aux_batch {
                let other =
                    rand::seq::index::sample(&mut aux_rng, train.len(), cfg.batch_size.min(train.len())).into_vec();
                let gates = masks.gate_multipliers(mode);
                let fwd = model.forward_from(1, h0.select(Axis(0), &other).view(), Some(&gates))?;
                for (a, head) in heads.iter_mut().enumerate() {
                    let b: Vec<usize> = other.iter().map(|&i| train.bias(a)[i]).collect();
                    head.train_step(fwd.bottleneck(), &b)?;
                }
            } else {
                for (a, head) in heads.iter_mut().enumerate() {
                    head.train_step(z.view(), &bias[a])?;
                }
            }
        }

        let mask = masks.extract_boolean_mask(cfg.zeta);
        let report = analysis::sparsity(model, &mask)?;
        let val_accuracy = match &val_cache {
            Some(c) => Some(c.evaluate(Some(&mask.gates()))?.overall),
            None => None,
        };
        let total = train.len() as f64;
        let record = EpochRecord {
            epoch,
            tau,
            m: masks.values().to_vec(),
            keep: mask.keep,
            train_objective: sums.0 / total,
            train_ce: sums.1 / total,
            train_mi: mi_sum
                .iter()
                .zip(&mi_batches)
                .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
                .collect(),
            val_accuracy,
            sparsity_percent: report.sparsity_percent,
            flops: report.flops,
        };
        log::info!(
            "epoch {epoch} tau {tau:.4e}: J {:.4} CE {:.4} MI {:?} S {:.2}%",
            record.train_objective,
            record.train_ce,
            record.train_mi,
            record.sparsity_percent
        );
        records.push(record);

        if epoch % cfg.upsilon == 0 {
            let stop = masks.anneal();
            meta.anneal_epochs.push(epoch);
            if stop {
                // The refit after the final anneal could not influence any mask.
                log::debug!("temperature below {}, stopping after epoch {epoch}", cfg.tau_min);
                break;
            }
            for head in &mut heads {
                head.reset_optimizer();
            }
            let acc = fit_heads(
                &mut heads,
                &cache,
                &masks.gate_multipliers(mode),
                train,
                cfg.refinetune_epochs(),
                cfg.batch_size,
                &mut aux_rng,
            )?;
            meta.aux_accuracy.push(acc);
        }
    }

    Ok(MaskTrace {
        epochs: records,
        mask_set: masks,
        zeta: cfg.zeta,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_synthetic_blobs;
    use crate::engine::{select_mask, train_vanilla};

    fn quick(seed: u64) -> BiseConfig {
        BiseConfig {
            aux_epochs: 2,
            upsilon: 1,
            kappa: 0.1,
            tau_min: 0.05,
            batch_size: 64,
            seed,
            ..BiseConfig::default()
        }
    }

    fn setup() -> (Mlp, BiasedDataset) {
        let ds = build_synthetic_blobs(3, 80, 10, 0.9, 2.0, 5).unwrap();
        let model = train_vanilla(&ds, &[12, 8], &VanillaConfig { epochs: 3, ..Default::default() }).unwrap();
        (model, ds)
    }

    #[test]
    fn follows_the_schedule_and_leaves_the_model_untouched() {
        let (model, ds) = setup();
        let before = model.to_bytes();
        let cfg = quick(1);
        let trace = run_bise(&model, &ds, Some(&ds), &cfg).unwrap();
        assert_eq!(model.to_bytes(), before);
        assert_eq!(trace.epochs.len(), cfg.scheduled_epochs());
        assert_eq!(trace.meta.anneal_epochs.len(), trace.epochs.len());
        assert!(trace.mask_set.tau() < cfg.tau_min);
        for pair in trace.epochs.windows(2) {
            assert!(pair[1].tau < pair[0].tau);
        }
        assert_eq!(trace.meta.aux_accuracy.len(), trace.epochs.len());
        select_mask(&trace, true).unwrap();
    }

    #[test]
    fn same_seed_same_trace() {
        let (model, ds) = setup();
        let a = run_bise(&model, &ds, None, &quick(4)).unwrap();
        let b = run_bise(&model, &ds, None, &quick(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multibias_requires_two_axes() {
        let (model, ds) = setup();
        assert!(matches!(run_bise_multibias(&model, &ds, None, &quick(0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn unsupervised_records_pseudo_fraction() {
        let (model, ds) = setup();
        let cfg = BiseConfig {
            mode: BiseMode::Unsupervised,
            ..quick(2)
        };
        let t = run_bise(&model, &ds, None, &cfg).unwrap();
        let f = t.meta.pseudo_aligned_fraction.unwrap();
        assert_eq!(f.len(), 1);
        assert!((0.0..=1.0).contains(&f[0]));
    }
}
