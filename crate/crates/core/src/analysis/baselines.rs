use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{report_for_counts, CachedEval, EvalReport};
use crate::error::{Error, Result};
use crate::mask::{BooleanMask, MaskSet};
use crate::nn::Mlp;
use crate::seed;

/// One point of a pruning sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Threshold `ζ` or target sparsity fraction, depending on the sweep.
    pub x: f64,
    pub sparsity_percent: f64,
    pub flops: u64,
    pub eval: EvalReport,
    pub mask: BooleanMask,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::param("sweep values must lie in [0, 1]"));
    }
    Ok(())
}

fn row(model: &Mlp, eval: &CachedEval<'_>, x: f64, mask: BooleanMask) -> Result<SweepRow> {
    let report = super::sparsity(model, &mask)?;
    Ok(SweepRow {
        x,
        sparsity_percent: report.sparsity_percent,
        flops: report.flops,
        eval: eval.evaluate(Some(&mask.gates()))?,
        mask,
    })
}

/// Prunes with `keep_i ⇔ σ(m_i) ≥ ζ` (gates read at `τ = 1`) for each `ζ`.
pub fn threshold_sweep(
    model: &Mlp,
    mask_set: &MaskSet,
    eval: &CachedEval<'_>,
    zeta_grid: &[f64],
) -> Result<Vec<SweepRow>> {
    check_grid(zeta_grid)?;
    if zeta_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param("threshold grid must be sorted"));
    }
    mask_set.check_model(model)?;
    zeta_grid
        .iter()
        .map(|&z| row(model, eval, z, mask_set.extract_at(1.0, z)))
        .collect()
}

/// Removes neurons in the given order, choosing the prefix length whose
/// sparsity is closest to `target` (a fraction). Ties go to fewer removals.
pub fn prune_by_order(model: &Mlp, order: &[usize], target: f64) -> Result<BooleanMask> {
    let sizes = model.hidden_dims();
    let offsets = model.hidden_offsets();
    let n = model.hidden_count();
    if order.len() != n {
        return Err(Error::dim("ordering must list every hidden neuron once"));
    }
    let layer_of = |i: usize| offsets.iter().rposition(|&o| o <= i).unwrap().min(sizes.len() - 1);
    let mut kept = sizes.clone();
    let mut best = (f64::INFINITY, 0);
    for removed in 0..=n {
        if removed > 0 {
            kept[layer_of(order[removed - 1])] -= 1;
        }
        let s = report_for_counts(model, &kept).sparsity_percent;
        let gap = (s - 100.0 * target).abs();
        if gap < best.0 {
            best = (gap, removed);
        }
    }
    let mut keep = vec![true; n];
    for &i in &order[..best.1] {
        keep[i] = false;
    }
    BooleanMask::from_keep(keep, sizes)
}

/// `sqrt(‖w_in‖² + b²)` for every hidden neuron.
pub fn neuron_norms(model: &Mlp) -> Vec<f64> {
    let mut out = Vec::with_capacity(model.hidden_count());
    for layer in &model.layers()[..model.encoder_depth()] {
        for j in 0..layer.output_dim() {
            let w = layer.weight.column(j);
            out.push((w.dot(&w) + layer.bias[j] * layer.bias[j]).sqrt());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MagnitudeMode {
    /// One ranking across all hidden layers.
    #[default]
    Global,
    /// The same fraction of neurons is removed from every layer, lowest norms first.
    PerLayer,
}

fn ascending(scores: &[f64], ids: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut order: Vec<usize> = ids.collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

/// Structured magnitude pruning without finetuning.
pub fn magnitude_prune(
    model: &Mlp,
    eval: &CachedEval<'_>,
    targets: &[f64],
    mode: MagnitudeMode,
) -> Result<Vec<SweepRow>> {
    check_grid(targets)?;
    let norms = neuron_norms(model);
    match mode {
        MagnitudeMode::Global => ranking_prune(model, eval, &norms, targets),
        MagnitudeMode::PerLayer => {
            let offsets = model.hidden_offsets();
            let sizes = model.hidden_dims();
            let per_layer: Vec<Vec<usize>> = (0..sizes.len())
                .map(|k| ascending(&norms, offsets[k]..offsets[k + 1]))
                .collect();
            let max_w = sizes.iter().copied().max().unwrap_or(0);
            targets
                .iter()
                .map(|&t| {
                    let mut best: Option<(f64, BooleanMask)> = None;
                    for step in 0..=max_w {
                        let q = step as f64 / max_w as f64;
                        let mut keep = vec![true; model.hidden_count()];
                        for (k, order) in per_layer.iter().enumerate() {
                            let drop = (q * sizes[k] as f64).round() as usize;
                            for &i in &order[..drop] {
                                keep[i] = false;
                            }
                        }
                        let mask = BooleanMask::from_keep(keep, sizes.clone())?;
                        let gap = (super::sparsity(model, &mask)?.sparsity_percent - 100.0 * t).abs();
                        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
                            best = Some((gap, mask));
                        }
                    }
                    row(model, eval, t, best.expect("at least one candidate").1)
                })
                .collect()
        }
    }
}

/// Removes the lowest-scoring neurons first (e.g. scores = learned `m_i`).
pub fn ranking_prune(
    model: &Mlp,
    eval: &CachedEval<'_>,
    scores: &[f64],
    targets: &[f64],
) -> Result<Vec<SweepRow>> {
    check_grid(targets)?;
    if scores.len() != model.hidden_count() {
        return Err(Error::dim("one score per hidden neuron required"));
    }
    let order = ascending(scores, 0..scores.len());
    targets
        .iter()
        .map(|&t| row(model, eval, t, prune_by_order(model, &order, t)?))
        .collect()
}

/// Uniformly random neuron removal; one fresh permutation per target.
pub fn random_prune(model: &Mlp, eval: &CachedEval<'_>, targets: &[f64], seed: u64) -> Result<Vec<SweepRow>> {
    check_grid(targets)?;
    let mut rng = seed::stream(seed, "random-prune");
    targets
        .iter()
        .map(|&t| {
            let mut order: Vec<usize> = (0..model.hidden_count()).collect();
            order.shuffle(&mut rng);
            row(model, eval, t, prune_by_order(model, &order, t)?)
        })
        .collect()
}

/// `zeta_or_target,S_percent,flops,accuracy[,<group>...]`, accuracies in percent.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let groups: Vec<String> = rows
        .first()
        .map(|r| r.eval.groups.iter().map(|g| g.name.clone()).collect())
        .unwrap_or_default();
    let mut out = String::from("zeta_or_target,S_percent,flops,accuracy");
    for g in &groups {
        out.push(',');
        out.push_str(g);
    }
    out.push('\n');
    let pct = |v: Option<f64>| v.map_or(String::new(), |a| format!("{:.4}", 100.0 * a));
    for r in rows {
        out.push_str(&format!("{},{:.4},{},{}", r.x, r.sparsity_percent, r.flops, pct(Some(r.eval.overall))));
        for g in &r.eval.groups {
            out.push(',');
            out.push_str(&pct(g.accuracy));
        }
        out.push('\n');
    }
    out
}
