//! Versioned experiment reports and their seed aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use bise::analysis::{EvalReport, PruneReport};
use bise::engine::MaskTrace;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSummary {
    pub epochs: usize,
    pub anneals: usize,
    pub final_tau: f64,
    pub best_epoch: Option<usize>,
    pub sparsity_percent: Vec<f64>,
    pub mi_skipped_batches: usize,
    pub aux_accuracy: Vec<f64>,
    pub pseudo_aligned_fraction: Option<Vec<f64>>,
}

impl TraceSummary {
    pub fn of(trace: &MaskTrace) -> Self {
        Self {
            epochs: trace.epochs.len(),
            anneals: trace.mask_set.anneal_count(),
            final_tau: trace.mask_set.tau(),
            best_epoch: trace.best_index().map(|i| trace.epochs[i].epoch),
            sparsity_percent: trace.epochs.iter().map(|e| e.sparsity_percent).collect(),
            mi_skipped_batches: trace.meta.mi_skipped_batches,
            aux_accuracy: trace.meta.aux_accuracy.clone(),
            pseudo_aligned_fraction: trace.meta.pseudo_aligned_fraction.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineEntry {
    pub name: String,
    pub sparsity_percent: f64,
    pub flops: u64,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedReport {
    pub seed: u64,
    pub vanilla: EvalReport,
    pub dense_flops: u64,
    pub bise_best: Option<EvalReport>,
    pub bise_last: Option<EvalReport>,
    pub finetuned: Option<EvalReport>,
    pub prune_best: Option<PruneReport>,
    pub prune_last: Option<PruneReport>,
    pub baselines: Vec<BaselineEntry>,
    pub trace: Option<TraceSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (zero for a single value).
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n.max(1) as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { n, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub seeds: Vec<SeedReport>,
    pub aggregates: BTreeMap<String, Aggregate>,
}

fn eval_metrics(prefix: &str, e: &EvalReport, out: &mut Vec<(String, f64)>) {
    out.push((format!("{prefix}.unbiased"), e.unbiased));
    out.push((format!("{prefix}.overall"), e.overall));
    out.push((format!("{prefix}.worst_group"), e.worst_group));
    for g in &e.groups {
        if let Some(a) = g.accuracy {
            out.push((format!("{prefix}.group.{}", g.name), a));
        }
    }
}

/// Flat metric list of one seed; aggregates are computed from these alone.
pub fn seed_metrics(r: &SeedReport) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    eval_metrics("vanilla", &r.vanilla, &mut out);
    for (name, e) in [("bise_best", &r.bise_best), ("bise_last", &r.bise_last), ("finetuned", &r.finetuned)] {
        if let Some(e) = e {
            eval_metrics(name, e, &mut out);
        }
    }
    for (name, p) in [("bise_best", &r.prune_best), ("bise_last", &r.prune_last)] {
        if let Some(p) = p {
            out.push((format!("{name}.sparsity_percent"), p.sparsity_percent));
            out.push((format!("{name}.flops"), p.flops as f64));
        }
    }
    for b in &r.baselines {
        out.push((format!("baseline.{}.unbiased", b.name), b.eval.unbiased));
        out.push((format!("baseline.{}.sparsity_percent", b.name), b.sparsity_percent));
        out.push((format!("baseline.{}.flops", b.name), b.flops as f64));
    }
    out
}

pub fn aggregates(seeds: &[SeedReport]) -> BTreeMap<String, Aggregate> {
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in seeds {
        for (k, v) in seed_metrics(s) {
            values.entry(k).or_default().push(v);
        }
    }
    values.into_iter().map(|(k, v)| (k, Aggregate::of(&v))).collect()
}

impl ExperimentReport {
    pub fn new(config: RunConfig, mut seeds: Vec<SeedReport>) -> Self {
        seeds.sort_by_key(|s| s.seed);
        let aggregates = aggregates(&seeds);
        Self {
            schema_version: SCHEMA_VERSION,
            config,
            seeds,
            aggregates,
        }
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::invalid(format!("report is not JSON: {e}")))?;
        match raw.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(CliError::invalid(format!(
                    "report schema version {v} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(CliError::invalid("report has no schema_version")),
        }
        serde_json::from_value(raw).map_err(|e| CliError::invalid(format!("malformed report: {e}")))
    }

    /// Merges reports of the same configuration (apart from seeds), keeping
    /// one entry per seed.
    pub fn merge(reports: Vec<ExperimentReport>) -> CliResult<Self> {
        let mut iter = reports.into_iter();
        let first = iter.next().ok_or_else(|| CliError::invalid("no reports to merge"))?;
        let mut config = first.config.clone();
        let mut seeds = first.seeds;
        for r in iter {
            let mut a = r.config.clone();
            a.seeds.clone_from(&config.seeds);
            a.out.clone_from(&config.out);
            if a != config {
                return Err(CliError::invalid("reports were produced with different configurations"));
            }
            for s in r.seeds {
                if seeds.iter().any(|x| x.seed == s.seed) {
                    return Err(CliError::invalid(format!("seed {} appears in more than one report", s.seed)));
                }
                seeds.push(s);
            }
        }
        config.seeds = {
            let mut v: Vec<u64> = seeds.iter().map(|s| s.seed).collect();
            v.sort_unstable();
            v
        };
        Ok(Self::new(config, seeds))
    }

    fn cell(&self, key: &str, scale: f64, digits: usize) -> String {
        match self.aggregates.get(key) {
            Some(a) if a.n > 1 => format!("{:.*} ± {:.*}", digits, a.mean * scale, digits, a.std * scale),
            Some(a) => format!("{:.*}", digits, a.mean * scale),
            None => "-".into(),
        }
    }

    fn rows(&self) -> Vec<(String, String)> {
        let mut rows = vec![("Vanilla".to_string(), "vanilla".to_string())];
        for (label, key) in [("BISE (best)", "bise_best"), ("BISE (last)", "bise_last"), ("BISE + finetune", "finetuned")] {
            if self.aggregates.contains_key(&format!("{key}.unbiased")) {
                rows.push((label.into(), key.into()));
            }
        }
        let mut names: Vec<&str> = self
            .aggregates
            .keys()
            .filter_map(|k| k.strip_prefix("baseline.")?.strip_suffix(".unbiased"))
            .collect();
        names.dedup();
        for n in names {
            rows.push((n.to_string(), format!("baseline.{n}")));
        }
        rows
    }

    fn size_keys(key: &str) -> (String, String) {
        match key {
            "vanilla" => (String::new(), String::new()),
            "finetuned" => ("bise_last.sparsity_percent".into(), "bise_last.flops".into()),
            k => (format!("{k}.sparsity_percent"), format!("{k}.flops")),
        }
    }

    /// Comparison table with accuracy (percent), sparsity and FLOPs columns.
    pub fn markdown(&self) -> String {
        let n = self.seeds.len();
        let dense = self.seeds.first().map_or(0, |s| s.dense_flops);
        let mut out = format!("{} seed(s)\n\n| Model | Acc (%) | S (%) | FLOPs (k) |\n|---|---|---|---|\n", n);
        for (label, key) in self.rows() {
            let (s_key, f_key) = Self::size_keys(&key);
            let (s, f) = if key == "vanilla" {
                ("0.0".to_string(), format!("{:.1}", dense as f64 / 1000.0))
            } else {
                (self.cell(&s_key, 1.0, 1), self.cell(&f_key, 1e-3, 1))
            };
            let _ = writeln!(out, "| {label} | {} | {s} | {f} |", self.cell(&format!("{key}.unbiased"), 100.0, 1));
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("model,acc_mean,acc_std,n,s_percent,flops\n");
        for (label, key) in self.rows() {
            let acc = self.aggregates[&format!("{key}.unbiased")];
            let (s_key, f_key) = Self::size_keys(&key);
            let get = |k: &str| self.aggregates.get(k).map_or(String::new(), |a| a.mean.to_string());
            let (s, f) = if key == "vanilla" {
                ("0".to_string(), self.seeds.first().map_or(0, |s| s.dense_flops).to_string())
            } else {
                (get(&s_key), get(&f_key))
            };
            let _ = writeln!(out, "{label},{},{},{},{s},{f}", acc.mean, acc.std, acc.n);
        }
        out
    }
}
