//! SGD with momentum and Adam over flat parameter slices.
//!
//! Both use coupled L2 weight decay: the decay term `λw` is added to the
//! gradient before any moment estimate is updated.
//!
//! SGD: `v ← βv + (g + λw)`, `w ← w − lr·v`.
//!
//! Adam: `g' = g + λw`, `m ← β1 m + (1−β1) g'`, `s ← β2 s + (1−β2) g'²`,
//! `w ← w − lr · (m/(1−β1ᵗ)) / (sqrt(s/(1−β2ᵗ)) + ε)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn sgd(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::SgdMomentum,
            lr,
            momentum,
            weight_decay,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn adam(lr: f64, weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            momentum: 0.0,
            weight_decay,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Optimizer state: zero-initialised moment buffers and a step counter.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Drops all moment buffers and the step counter.
    pub fn reset(&mut self) {
        self.first.clear();
        self.second.clear();
        self.step = 0;
    }

    fn ensure_buffers(&mut self, params: &[&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len()
            || params.iter().zip(grads).any(|(p, g)| p.len() != g.len())
        {
            return Err(Error::dim("parameter and gradient shapes differ"));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            if self.config.kind == OptimizerKind::Adam {
                self.second = self.first.clone();
            }
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params).any(|(b, p)| b.len() != p.len())
        {
            return Err(Error::dim("parameter shapes changed between optimizer steps"));
        }
        Ok(())
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        match self.config.kind {
            OptimizerKind::SgdMomentum => self.sgd_step(params, grads),
            OptimizerKind::Adam => self.adam_step(params, grads),
        }
    }

    pub fn sgd_step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if self.config.kind != OptimizerKind::SgdMomentum {
            return Err(Error::State("sgd_step on a non-SGD optimizer".into()));
        }
        self.ensure_buffers(params, grads)?;
        self.step = self
            .step
            .checked_add(1)
            .ok_or_else(|| Error::Numeric("optimizer step counter overflow".into()))?;
        let OptimizerConfig {
            lr,
            momentum,
            weight_decay,
            ..
        } = self.config;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.first) {
            for ((w, &g), v) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *v = momentum * *v + (g + weight_decay * *w);
                *w -= lr * *v;
            }
        }
        Ok(())
    }

    pub fn adam_step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if self.config.kind != OptimizerKind::Adam {
            return Err(Error::State("adam_step on a non-Adam optimizer".into()));
        }
        self.ensure_buffers(params, grads)?;
        self.step = self
            .step
            .checked_add(1)
            .ok_or_else(|| Error::Numeric("optimizer step counter overflow".into()))?;
        let OptimizerConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        let t = self.step as f64;
        let c1 = 1.0 - beta1.powf(t);
        let c2 = 1.0 - beta2.powf(t);
        for (((p, g), m), s) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((w, &g), m), s) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(s.iter_mut()) {
                let g = g + weight_decay * *w;
                *m = beta1 * *m + (1.0 - beta1) * g;
                *s = beta2 * *s + (1.0 - beta2) * g * g;
                *w -= lr * (*m / c1) / ((*s / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
