use std::fs;
use std::path::{Path, PathBuf};

use bise::analysis::{
    dense_flops, evaluate, magnitude_prune, random_prune, sparsity, sweep_csv, threshold_sweep, CachedEval,
    SweepRow,
};
use bise::data::{load_dataset, save_dataset, BiasedDataset, DatasetManifest};
use bise::engine::{finetune, run_bise, select_mask, train_vanilla, BiseConfig, MaskTrace};
use bise::mask::{structural_prune, BooleanMask, MaskSet};
use bise::nn::{load_checkpoint, save_checkpoint, CheckpointMeta, Mlp};
use bise::{data::inject_bias_label_noise, seed};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::data::{build_splits, Splits};
use crate::error::{CliError, CliResult};
use crate::report::{BaselineEntry, ExperimentReport, SeedReport, TraceSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum HyperParam {
    AuxEpochs,
    Kappa,
    Upsilon,
    TauMin,
    Gamma,
}

#[derive(Debug, Clone, Default)]
pub struct SweepRequest {
    pub zeta: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub noise: Option<Vec<f64>>,
    pub targets: Option<Vec<f64>>,
    pub param: Option<(HyperParam, Vec<f64>)>,
}

pub fn seed_dir(cfg: &RunConfig, s: u64) -> PathBuf {
    cfg.out.join(format!("seed-{s}"))
}

fn data_dir(cfg: &RunConfig, s: u64) -> PathBuf {
    cfg.out.join("data").join(format!("seed-{s}"))
}

fn create_dir(p: &Path) -> CliResult<()> {
    fs::create_dir_all(p).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", p.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn require(path: &Path, hint: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::invalid(format!("{} not found ({hint})", path.display())))
    }
}

/// Runs `f` once per seed on a pool capped by `BISE_WORKERS`.
pub fn for_seeds<T: Send>(cfg: &RunConfig, f: impl Fn(u64) -> CliResult<T> + Sync) -> CliResult<Vec<T>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("BISE_WORKERS").ok().and_then(|v| v.parse::<usize>().ok()) {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::runtime(format!("cannot start worker pool: {e}")))?;
    pool.install(|| cfg.seeds.par_iter().map(|&s| f(s)).collect())
}

/// Cached splits from `gen-data` when present, otherwise built on the fly.
fn splits(cfg: &RunConfig, s: u64) -> CliResult<Splits> {
    let dir = data_dir(cfg, s);
    if dir.join("train.bised").exists() && dir.join("test.bised").exists() {
        let val = dir.join("val.bised");
        return Ok(Splits {
            train: load_dataset(&dir.join("train.bised"))?,
            val: if val.exists() { Some(load_dataset(&val)?) } else { None },
            test: load_dataset(&dir.join("test.bised"))?,
        });
    }
    build_splits(&cfg.dataset, s)
}

pub fn gen_data(cfg: &RunConfig) -> CliResult<()> {
    for_seeds(cfg, |s| {
        let sp = build_splits(&cfg.dataset, s)?;
        let dir = data_dir(cfg, s);
        create_dir(&dir)?;
        let mut manifest = std::collections::BTreeMap::new();
        for (name, ds) in sp.named() {
            save_dataset(&dir.join(format!("{name}.bised")), ds)?;
            manifest.insert(name, DatasetManifest::of(ds));
        }
        write_json(&dir.join("manifest.json"), &manifest)?;
        log::info!("seed {s}: datasets written to {}", dir.display());
        Ok(())
    })?;
    Ok(())
}

fn train_and_save(cfg: &RunConfig, s: u64, train: &BiasedDataset) -> CliResult<Mlp> {
    let vcfg = bise::engine::VanillaConfig { seed: s, ..cfg.vanilla.clone() };
    let model = train_vanilla(train, &cfg.hidden, &vcfg)?;
    let dir = seed_dir(cfg, s);
    create_dir(&dir)?;
    let meta = CheckpointMeta {
        seed: Some(s),
        epochs: Some(vcfg.epochs),
        note: Some("vanilla".into()),
    };
    save_checkpoint(&dir.join("vanilla.ckpt"), &model, &meta)?;
    Ok(model)
}

fn vanilla_model(cfg: &RunConfig, s: u64, explicit: Option<&Path>, train: &BiasedDataset) -> CliResult<Mlp> {
    if let Some(p) = explicit {
        require(p, "pass an existing checkpoint")?;
        return Ok(load_checkpoint(p)?.0);
    }
    let path = seed_dir(cfg, s).join("vanilla.ckpt");
    if path.exists() {
        return Ok(load_checkpoint(&path)?.0);
    }
    log::info!("seed {s}: no vanilla checkpoint at {}, training one", path.display());
    train_and_save(cfg, s, train)
}

fn write_experiment(cfg: &RunConfig, seeds: Vec<SeedReport>) -> CliResult<ExperimentReport> {
    let report = ExperimentReport::new(cfg.clone(), seeds);
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("report.json"), &report)?;
    Ok(report)
}

fn vanilla_seed_report(model: &Mlp, sp: &Splits, s: u64) -> CliResult<SeedReport> {
    Ok(SeedReport {
        seed: s,
        vanilla: evaluate(model, None, &sp.test)?,
        dense_flops: dense_flops(model),
        bise_best: None,
        bise_last: None,
        finetuned: None,
        prune_best: None,
        prune_last: None,
        baselines: Vec::new(),
        trace: None,
    })
}

pub fn train_vanilla_cmd(cfg: &RunConfig) -> CliResult<ExperimentReport> {
    let seeds = for_seeds(cfg, |s| {
        let sp = splits(cfg, s)?;
        let model = train_and_save(cfg, s, &sp.train)?;
        let r = vanilla_seed_report(&model, &sp, s)?;
        write_json(&seed_dir(cfg, s).join("vanilla_eval.json"), &r.vanilla)?;
        log::info!("seed {s}: vanilla unbiased accuracy {:.4}", r.vanilla.unbiased);
        Ok(r)
    })?;
    write_experiment(cfg, seeds)
}

fn bise_config(cfg: &RunConfig, s: u64) -> BiseConfig {
    BiseConfig { seed: s, ..cfg.bise.clone() }
}

/// Mask chosen for deployment: best on validation when available, else last.
fn chosen_mask(trace: &MaskTrace, has_val: bool) -> CliResult<BooleanMask> {
    Ok(select_mask(trace, has_val)?)
}

pub struct BiseOptions<'a> {
    pub model: Option<&'a Path>,
    pub finetune: bool,
    pub baselines: bool,
}

pub fn bise_cmd(cfg: &RunConfig, opts: &BiseOptions<'_>) -> CliResult<ExperimentReport> {
    let seeds = for_seeds(cfg, |s| {
        let sp = splits(cfg, s)?;
        let model = vanilla_model(cfg, s, opts.model, &sp.train)?;
        let dir = seed_dir(cfg, s);
        create_dir(&dir)?;
        let trace = run_bise(&model, &sp.train, sp.val.as_ref(), &bise_config(cfg, s))?;
        write_json(&dir.join("trace.json"), &trace)?;
        trace.mask_set.save_json(&dir.join("mask_set.json"))?;
        let last = trace.last_mask()?;
        write_text(&dir.join("mask_last.csv"), &last.to_csv())?;

        let mut r = vanilla_seed_report(&model, &sp, s)?;
        r.bise_last = Some(evaluate(&model, Some(&last), &sp.test)?);
        r.prune_last = Some(sparsity(&model, &last)?);
        if sp.val.is_some() {
            let best = chosen_mask(&trace, true)?;
            write_text(&dir.join("mask_best.csv"), &best.to_csv())?;
            r.bise_best = Some(evaluate(&model, Some(&best), &sp.test)?);
            r.prune_best = Some(sparsity(&model, &best)?);
        }
        let chosen = chosen_mask(&trace, sp.val.is_some())?;
        if opts.finetune && cfg.finetune.epochs > 0 {
            let pruned = structural_prune(&model, &chosen)?.model;
            let fcfg = bise::engine::FinetuneConfig { seed: s, ..cfg.finetune.clone() };
            let out = finetune(&pruned, &sp.train, sp.val.as_ref(), &fcfg)?;
            save_checkpoint(
                &dir.join("finetuned.ckpt"),
                &out.model,
                &CheckpointMeta {
                    seed: Some(s),
                    epochs: Some(out.selected_epoch),
                    note: Some("finetuned".into()),
                },
            )?;
            r.finetuned = Some(evaluate(&out.model, None, &sp.test)?);
        }
        if opts.baselines {
            let eval = CachedEval::new(&model, &sp.test)?;
            let target = sparsity(&model, &chosen)?.sparsity_percent / 100.0;
            let mag = magnitude_prune(&model, &eval, &[target], cfg.sweep.magnitude_mode)?;
            let rnd = random_prune(&model, &eval, &[target], seed::derive(s, "random-prune"))?;
            for (name, row) in [("magnitude", &mag[0]), ("random", &rnd[0])] {
                r.baselines.push(BaselineEntry {
                    name: name.into(),
                    sparsity_percent: row.sparsity_percent,
                    flops: row.flops,
                    eval: row.eval.clone(),
                });
            }
        }
        r.trace = Some(TraceSummary::of(&trace));
        write_json(&dir.join("seed_report.json"), &r)?;
        log::info!(
            "seed {s}: vanilla {:.4}, last {:.4} at S = {:.2}%",
            r.vanilla.unbiased,
            r.bise_last.as_ref().map_or(f64::NAN, |e| e.unbiased),
            r.prune_last.as_ref().map_or(f64::NAN, |p| p.sparsity_percent)
        );
        Ok(r)
    })?;
    write_experiment(cfg, seeds)
}

pub fn finetune_cmd(cfg: &RunConfig, model: &Path, mask: &Path) -> CliResult<()> {
    require(model, "pass an existing checkpoint")?;
    require(mask, "pass a mask CSV written by `bise`")?;
    let (dense, _) = load_checkpoint(model)?;
    let text = fs::read_to_string(mask)?;
    let mask = BooleanMask::from_csv(&text)?;
    for_seeds(cfg, |s| {
        let sp = splits(cfg, s)?;
        let pruned = structural_prune(&dense, &mask)?.model;
        let fcfg = bise::engine::FinetuneConfig { seed: s, ..cfg.finetune.clone() };
        let out = finetune(&pruned, &sp.train, sp.val.as_ref(), &fcfg)?;
        let dir = seed_dir(cfg, s);
        create_dir(&dir)?;
        save_checkpoint(
            &dir.join("finetuned.ckpt"),
            &out.model,
            &CheckpointMeta {
                seed: Some(s),
                epochs: Some(out.selected_epoch),
                note: Some("finetuned".into()),
            },
        )?;
        write_json(&dir.join("finetuned_eval.json"), &evaluate(&out.model, None, &sp.test)?)?;
        Ok(())
    })?;
    Ok(())
}

pub fn evaluate_cmd(cfg: &RunConfig, model: &Path, mask: Option<&Path>, split: Split) -> CliResult<String> {
    require(model, "pass an existing checkpoint")?;
    let (m, _) = load_checkpoint(model)?;
    let mask = match mask {
        Some(p) => {
            require(p, "pass a mask CSV")?;
            Some(BooleanMask::from_csv(&fs::read_to_string(p)?)?)
        }
        None => None,
    };
    let reports = for_seeds(cfg, |s| {
        let sp = splits(cfg, s)?;
        let ds = match split {
            Split::Train => &sp.train,
            Split::Test => &sp.test,
            Split::Val => sp
                .val
                .as_ref()
                .ok_or_else(|| CliError::invalid("the configuration has no validation split"))?,
        };
        let report = evaluate(&m, mask.as_ref(), ds)?;
        let dir = seed_dir(cfg, s);
        create_dir(&dir)?;
        write_json(&dir.join(format!("eval_{split:?}.json").to_lowercase()), &report)?;
        Ok(report)
    })?;
    Ok(serde_json::to_string_pretty(&reports)?)
}

fn retitle(csv: String, first: &str) -> String {
    match csv.split_once(',') {
        Some((_, rest)) => format!("{first},{rest}"),
        None => csv,
    }
}

fn trace_row(model: &Mlp, eval: &CachedEval<'_>, x: f64, trace: &MaskTrace, has_val: bool) -> CliResult<SweepRow> {
    let mask = chosen_mask(trace, has_val)?;
    let rep = sparsity(model, &mask)?;
    Ok(SweepRow {
        x,
        sparsity_percent: rep.sparsity_percent,
        flops: rep.flops,
        eval: eval.evaluate(Some(&mask.gates()))?,
        mask,
    })
}

pub fn sweep_cmd(cfg: &RunConfig, req: &SweepRequest, model: Option<&Path>) -> CliResult<Vec<PathBuf>> {
    let written = for_seeds(cfg, |s| {
        let sp = splits(cfg, s)?;
        let m = vanilla_model(cfg, s, model, &sp.train)?;
        let dir = seed_dir(cfg, s);
        create_dir(&dir)?;
        let eval = CachedEval::new(&m, &sp.test)?;
        let has_val = sp.val.is_some();
        let mut files = Vec::new();
        let mut emit = |name: &str, text: String| -> CliResult<()> {
            let p = dir.join(name);
            write_text(&p, &text)?;
            files.push(p);
            Ok(())
        };
        if let Some(grid) = &req.zeta {
            let path = dir.join("mask_set.json");
            require(&path, "run `bise` first")?;
            let set = MaskSet::load_json(&path)?;
            emit("sweep_zeta.csv", sweep_csv(&threshold_sweep(&m, &set, &eval, grid)?))?;
        }
        if let Some(grid) = &req.gamma {
            let rows = grid
                .iter()
                .map(|&g| {
                    let c = BiseConfig { gamma: g, ..bise_config(cfg, s) };
                    trace_row(&m, &eval, g, &run_bise(&m, &sp.train, sp.val.as_ref(), &c)?, has_val)
                })
                .collect::<CliResult<Vec<_>>>()?;
            emit("sweep_gamma.csv", retitle(sweep_csv(&rows), "gamma"))?;
        }
        if let Some(grid) = &req.noise {
            let rows = grid
                .iter()
                .map(|&p| {
                    let noisy = inject_bias_label_noise(&sp.train, p, seed::derive(s, "noise"))?;
                    let trace = run_bise(&m, &noisy, sp.val.as_ref(), &bise_config(cfg, s))?;
                    trace_row(&m, &eval, p, &trace, has_val)
                })
                .collect::<CliResult<Vec<_>>>()?;
            emit("sweep_noise.csv", retitle(sweep_csv(&rows), "noise_p"))?;
        }
        if let Some((param, values)) = &req.param {
            let rows = values
                .iter()
                .map(|&v| {
                    let mut c = bise_config(cfg, s);
                    match param {
                        HyperParam::AuxEpochs => c.aux_epochs = v as usize,
                        HyperParam::Kappa => c.kappa = v,
                        HyperParam::Upsilon => c.upsilon = v as usize,
                        HyperParam::TauMin => c.tau_min = v,
                        HyperParam::Gamma => c.gamma = v,
                    }
                    c.validate()?;
                    trace_row(&m, &eval, v, &run_bise(&m, &sp.train, sp.val.as_ref(), &c)?, has_val)
                })
                .collect::<CliResult<Vec<_>>>()?;
            let name = format!("{param:?}").to_lowercase();
            emit(&format!("sweep_{name}.csv"), retitle(sweep_csv(&rows), &name))?;
        }
        if let Some(targets) = &req.targets {
            emit(
                "sweep_magnitude.csv",
                sweep_csv(&magnitude_prune(&m, &eval, targets, cfg.sweep.magnitude_mode)?),
            )?;
            let mut rows = Vec::new();
            for k in 0..cfg.sweep.random_seeds.max(1) {
                rows.extend(random_prune(&m, &eval, targets, seed::derive(s, &format!("random-prune-{k}")))?);
            }
            emit("sweep_random.csv", sweep_csv(&rows))?;
        }
        Ok(files)
    })?;
    Ok(written.into_iter().flatten().collect())
}

pub fn report_cmd(inputs: &[PathBuf], out: Option<&Path>) -> CliResult<String> {
    if inputs.is_empty() {
        return Err(CliError::invalid("no report files given"));
    }
    let mut reports = Vec::new();
    for p in inputs {
        let text = fs::read_to_string(p).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", p.display())))?;
        reports.push(ExperimentReport::parse(&text)?);
    }
    let merged = ExperimentReport::merge(reports)?;
    let md = merged.markdown();
    if let Some(dir) = out {
        create_dir(dir)?;
        write_json(&dir.join("merged_report.json"), &merged)?;
        write_text(&dir.join("summary.md"), &md)?;
        write_text(&dir.join("summary.csv"), &merged.csv())?;
    }
    Ok(md)
}
