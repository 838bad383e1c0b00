//! Per-neuron gates over the hidden layers of an [`Mlp`].
//!
//! Each hidden neuron `i` owns a real parameter `m_i`. Its soft gate is
//! `σ(m_i/τ)`; the forward pass multiplies the neuron's activation by the hard
//! indicator `1{σ(m_i/τ) ≥ ζ}` (ties keep the neuron). The backward pass treats
//! the indicator as the identity (straight-through), so
//! `∂L/∂m_i = ∂L/∂ĥ_i · h_i · σ'(m_i/τ)/τ`, even for neurons that are currently
//! gated off.

mod prune;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sigmoid, Mlp};

pub use prune::{structural_prune, PruneOutcome};

/// Default keep threshold on the soft gate.
pub const DEFAULT_ZETA: f64 = 0.5;

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("temperature must be positive, got {tau}")))
    }
}

/// Soft gate `σ(m/τ)`.
pub fn gate_soft(m: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(sigmoid(m / tau))
}

/// Hard-gated activation `h · 1{σ(m/τ) ≥ ζ}`.
pub fn gate_forward(h: f64, m: f64, tau: f64, zeta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::param(format!("threshold must lie in [0, 1], got {zeta}")));
    }
    Ok(if gate_soft(m, tau)? >= zeta { h } else { 0.0 })
}

/// `σ'(m/τ)/τ`, the straight-through factor mapping a gate-multiplier
/// gradient onto `m`.
pub fn ste_factor(m: f64, tau: f64) -> Result<f64> {
    let s = gate_soft(m, tau)?;
    Ok(s * (1.0 - s) / tau)
}

/// Straight-through gradient for one neuron and one sample.
pub fn gate_backward(upstream: f64, h: f64, m: f64, tau: f64) -> Result<f64> {
    Ok(upstream * h * ste_factor(m, tau)?)
}

/// How gate multipliers are produced from `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMode {
    /// `1{σ(m/τ) ≥ ζ}`: what training and evaluation use.
    Hard { zeta: f64 },
    /// `σ(m/τ)` itself. Differentiable, used for gradient checks.
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSet {
    m: Vec<f64>,
    tau: f64,
    kappa: f64,
    upsilon: usize,
    tau_min: f64,
    layer_sizes: Vec<usize>,
    anneals: usize,
}

impl MaskSet {
    /// Fresh gates (`m = 0`, `τ = 1`) for hidden layers of the given widths.
    pub fn new(layer_sizes: Vec<usize>, kappa: f64, upsilon: usize, tau_min: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::param(format!("anneal factor must lie in (0, 1), got {kappa}")));
        }
        if !(tau_min > 0.0 && tau_min < 1.0) {
            return Err(Error::param(format!("stop temperature must lie in (0, 1), got {tau_min}")));
        }
        if upsilon == 0 {
            return Err(Error::param("anneal period must be at least one epoch"));
        }
        let total = layer_sizes.iter().sum();
        Ok(Self {
            m: vec![0.0; total],
            tau: 1.0,
            kappa,
            upsilon,
            tau_min,
            layer_sizes,
            anneals: 0,
        })
    }

    pub fn for_model(model: &Mlp, kappa: f64, upsilon: usize, tau_min: f64) -> Result<Self> {
        Self::new(model.hidden_dims(), kappa, upsilon, tau_min)
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.m
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.m
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn upsilon(&self) -> usize {
        self.upsilon
    }

    pub fn tau_min(&self) -> f64 {
        self.tau_min
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn anneal_count(&self) -> usize {
        self.anneals
    }

    /// `τ ← τ·κ`. Returns `true` once `τ < τ_min`.
    pub fn anneal(&mut self) -> bool {
        self.tau *= self.kappa;
        self.anneals += 1;
        self.tau < self.tau_min
    }

    /// Number of anneal events until the stop condition fires from `τ = 1`.
    pub fn scheduled_anneals(&self) -> usize {
        let mut tau = 1.0;
        let mut n = 0;
        while tau >= self.tau_min {
            tau *= self.kappa;
            n += 1;
        }
        n
    }

    pub fn check_model(&self, model: &Mlp) -> Result<()> {
        if model.hidden_dims() != self.layer_sizes {
            return Err(Error::dim(format!(
                "mask covers layers {:?} but the model has {:?}",
                self.layer_sizes,
                model.hidden_dims()
            )));
        }
        Ok(())
    }

    pub fn soft_gates(&self) -> Vec<f64> {
        self.m.iter().map(|&m| sigmoid(m / self.tau)).collect()
    }

    pub fn gate_multipliers(&self, mode: GateMode) -> Vec<f64> {
        match mode {
            GateMode::Soft => self.soft_gates(),
            GateMode::Hard { zeta } => self
                .m
                .iter()
                .map(|&m| if sigmoid(m / self.tau) >= zeta { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Maps `∂L/∂g_i` (gradient w.r.t. each gate multiplier) onto `∂L/∂m_i`.
    pub fn chain_to_m(&self, gate_grads: &[f64]) -> Result<Vec<f64>> {
        if gate_grads.len() != self.m.len() {
            return Err(Error::dim(format!(
                "{} gate gradients for {} gates",
                gate_grads.len(),
                self.m.len()
            )));
        }
        self.m
            .iter()
            .zip(gate_grads)
            .map(|(&m, &g)| Ok(g * ste_factor(m, self.tau)?))
            .collect()
    }

    /// `keep_i ⇔ σ(m_i/τ) ≥ ζ` at the current temperature.
    pub fn extract_boolean_mask(&self, zeta: f64) -> BooleanMask {
        self.extract_at(self.tau, zeta)
    }

    /// Same as [`MaskSet::extract_boolean_mask`] at an explicit temperature.
    pub fn extract_at(&self, tau: f64, zeta: f64) -> BooleanMask {
        BooleanMask {
            keep: self.m.iter().map(|&m| sigmoid(m / tau) >= zeta).collect(),
            layer_sizes: self.layer_sizes.clone(),
            tau: Some(tau),
            zeta: Some(zeta),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = serde_json::from_str(&text)?;
        if set.m.len() != set.layer_sizes.iter().sum::<usize>() {
            return Err(Error::dim("mask values do not match the recorded layer sizes"));
        }
        check_tau(set.tau)?;
        Ok(set)
    }
}

/// Hard keep/prune decision per hidden neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BooleanMask {
    pub keep: Vec<bool>,
    pub layer_sizes: Vec<usize>,
    /// Temperature the mask was extracted at, when derived from a [`MaskSet`].
    pub tau: Option<f64>,
    /// Threshold the mask was extracted with, when derived from a [`MaskSet`].
    pub zeta: Option<f64>,
}

impl BooleanMask {
    pub fn all_keep(layer_sizes: Vec<usize>) -> Self {
        let n = layer_sizes.iter().sum();
        Self {
            keep: vec![true; n],
            layer_sizes,
            tau: None,
            zeta: None,
        }
    }

    pub fn from_keep(keep: Vec<bool>, layer_sizes: Vec<usize>) -> Result<Self> {
        if keep.len() != layer_sizes.iter().sum::<usize>() {
            return Err(Error::dim(format!(
                "{} keep flags for layers {layer_sizes:?}",
                keep.len()
            )));
        }
        Ok(Self {
            keep,
            layer_sizes,
            tau: None,
            zeta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Kept-neuron count per hidden layer.
    pub fn kept_per_layer(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.layer_sizes.len());
        let mut start = 0;
        for &w in &self.layer_sizes {
            out.push(self.keep[start..start + w].iter().filter(|&&k| k).count());
            start += w;
        }
        out
    }

    /// 0/1 gate multipliers.
    pub fn gates(&self) -> Vec<f64> {
        self.keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect()
    }

    pub fn check_model(&self, model: &Mlp) -> Result<()> {
        if model.hidden_dims() != self.layer_sizes {
            return Err(Error::dim(format!(
                "mask covers layers {:?} but the model has {:?}",
                self.layer_sizes,
                model.hidden_dims()
            )));
        }
        Ok(())
    }

    /// `neuron,layer,keep` rows with 0/1 keep flags.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("neuron,layer,keep\n");
        let mut idx = 0;
        for (layer, &w) in self.layer_sizes.iter().enumerate() {
            for _ in 0..w {
                out.push_str(&format!("{idx},{layer},{}\n", u8::from(self.keep[idx])));
                idx += 1;
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("neuron,layer,keep") {
            return Err(Error::param("mask CSV must start with the header neuron,layer,keep"));
        }
        let mut keep = Vec::new();
        let mut layer_sizes: Vec<usize> = Vec::new();
        for (row, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.trim().split(',').collect();
            let parsed: Option<(usize, usize, u8)> = match fields.as_slice() {
                [n, l, k] => n.parse().ok().zip(l.parse().ok()).zip(k.parse().ok()).map(|((n, l), k)| (n, l, k)),
                _ => None,
            };
            let (n, layer, k) = parsed.ok_or_else(|| Error::param(format!("bad mask CSV row {}", row + 2)))?;
            if n != keep.len() || k > 1 || layer + 1 < layer_sizes.len() || layer > layer_sizes.len() {
                return Err(Error::param(format!("bad mask CSV row {}", row + 2)));
            }
            if layer == layer_sizes.len() {
                layer_sizes.push(0);
            }
            layer_sizes[layer] += 1;
            keep.push(k == 1);
        }
        Self::from_keep(keep, layer_sizes)
    }
}
