use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::BiasedDataset;
use crate::error::{Error, Result};
use crate::mask::BooleanMask;
use crate::nn::{loss, Mlp};

const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub name: String,
    pub count: usize,
    /// `None` for an empty group.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub overall: f64,
    pub groups: Vec<GroupAccuracy>,
    /// Mean accuracy over non-empty groups.
    pub unbiased: f64,
    /// Minimum accuracy over non-empty groups.
    pub worst_group: f64,
}

impl EvalReport {
    pub fn group(&self, name: &str) -> Option<f64> {
        self.groups.iter().find(|g| g.name == name).and_then(|g| g.accuracy)
    }
}

/// Scores predictions against a dataset's labels and alignment groups.
pub fn evaluate_predictions(ds: &BiasedDataset, pred: &[usize]) -> Result<EvalReport> {
    if pred.len() != ds.len() {
        return Err(Error::dim(format!("{} predictions for {} samples", pred.len(), ds.len())));
    }
    let g = ds.group_count();
    let mut correct = vec![0usize; g];
    let mut count = vec![0usize; g];
    for (i, &p) in pred.iter().enumerate() {
        let k = ds.group(i);
        count[k] += 1;
        correct[k] += usize::from(p == ds.labels()[i]);
    }
    let groups: Vec<GroupAccuracy> = ds
        .group_names()
        .into_iter()
        .enumerate()
        .map(|(k, name)| GroupAccuracy {
            name,
            count: count[k],
            accuracy: (count[k] > 0).then(|| correct[k] as f64 / count[k] as f64),
        })
        .collect();
    let present: Vec<f64> = groups.iter().filter_map(|g| g.accuracy).collect();
    for g in groups.iter().filter(|g| g.accuracy.is_none()) {
        log::warn!("group {} is empty and is left out of the unbiased mean", g.name);
    }
    let total: usize = correct.iter().sum();
    Ok(EvalReport {
        samples: ds.len(),
        overall: total as f64 / ds.len().max(1) as f64,
        unbiased: if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        },
        worst_group: present.iter().copied().fold(f64::INFINITY, f64::min).min(1.0),
        groups,
    })
}

/// Hard-argmax accuracy of a (optionally masked) model.
pub fn evaluate(model: &Mlp, mask: Option<&BooleanMask>, ds: &BiasedDataset) -> Result<EvalReport> {
    if let Some(m) = mask {
        m.check_model(model)?;
    }
    let gates = mask.map(BooleanMask::gates);
    let mut pred = Vec::with_capacity(ds.len());
    for start in (0..ds.len()).step_by(CHUNK) {
        let x = ds.range(start, (start + CHUNK).min(ds.len()));
        pred.extend(model.predict(x.view(), gates.as_deref())?);
    }
    evaluate_predictions(ds, &pred)
}

/// Evaluator that caches the first hidden layer's pre-gate activations, so
/// that any number of masks can be scored on the same data cheaply. Gating
/// never changes those activations, only what is passed on.
#[derive(Debug, Clone)]
pub struct CachedEval<'a> {
    model: &'a Mlp,
    ds: &'a BiasedDataset,
    prefix: Array2<f64>,
    start: usize,
}

/// Pre-gate output of hidden layer 0 for every sample.
pub fn first_hidden_activations(model: &Mlp, ds: &BiasedDataset) -> Result<Array2<f64>> {
    if model.encoder_depth() == 0 {
        return Err(Error::param("model has no hidden layer"));
    }
    if ds.input_dim() != model.input_dim() {
        return Err(Error::dim(format!(
            "dataset has {} features, model expects {}",
            ds.input_dim(),
            model.input_dim()
        )));
    }
    let layer = &model.layers()[0];
    let mut out = Array2::zeros((ds.len(), layer.output_dim()));
    for start in (0..ds.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(ds.len());
        let x = ds.range(start, end);
        let mut z = x.dot(&layer.weight);
        z += &layer.bias;
        let act = layer.activation;
        z.mapv_inplace(|v| act.apply(v));
        out.slice_mut(s![start..end, ..]).assign(&z);
    }
    Ok(out)
}

impl<'a> CachedEval<'a> {
    pub fn new(model: &'a Mlp, ds: &'a BiasedDataset) -> Result<Self> {
        if model.encoder_depth() == 0 {
            return Ok(Self {
                model,
                ds,
                prefix: ds.range(0, ds.len()),
                start: 0,
            });
        }
        Ok(Self {
            model,
            ds,
            prefix: first_hidden_activations(model, ds)?,
            start: 1,
        })
    }

    pub fn dataset(&self) -> &BiasedDataset {
        self.ds
    }

    fn rows(&self, start: usize, end: usize) -> ArrayView2<'_, f64> {
        self.prefix.slice(s![start..end, ..])
    }

    pub fn predict(&self, gates: Option<&[f64]>) -> Result<Vec<usize>> {
        let mut pred = Vec::with_capacity(self.ds.len());
        for start in (0..self.ds.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(self.ds.len());
            let fwd = self.model.forward_from(self.start, self.rows(start, end), gates)?;
            pred.extend(loss::argmax_rows(fwd.logits.view()));
        }
        Ok(pred)
    }

    pub fn evaluate(&self, gates: Option<&[f64]>) -> Result<EvalReport> {
        evaluate_predictions(self.ds, &self.predict(gates)?)
    }

    /// Encoder outputs `[N × d]` under the given gates.
    pub fn bottleneck(&self, gates: Option<&[f64]>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((self.ds.len(), self.model.bottleneck_dim()));
        for start in (0..self.ds.len()).step_by(CHUNK) {
            let end = (start + CHUNK).min(self.ds.len());
            let fwd = self.model.forward_from(self.start, self.rows(start, end), gates)?;
            out.slice_mut(s![start..end, ..]).assign(&fwd.bottleneck());
        }
        Ok(out)
    }
}
