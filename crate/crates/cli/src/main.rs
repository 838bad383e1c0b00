//! `bise`: dataset generation, vanilla training, mask learning, finetuning,
//! evaluation, sweeps and report merging, driven by one JSON config.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input. Failures are
//! printed to stderr as `{"error": ..., "message": ...}`.

mod commands;
mod config;
mod data;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::{BiseOptions, HyperParam, Split, SweepRequest};
use config::RunConfig;
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "bise", version, about = "Bias-invariant subnetwork extraction experiments")]
struct Cli {
    /// JSON run configuration; missing keys take the preset defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset used when no config file is given.
    #[arg(long, global = true, default_value = "multicolor-mnist-paper")]
    preset: String,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated seeds (overrides the config).
    #[arg(long, alias = "seed", global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the datasets and write caches plus a manifest.
    GenData,
    /// Train the dense model on plain cross-entropy.
    TrainVanilla,
    /// Learn neuron masks on the frozen vanilla model.
    Bise {
        /// Vanilla checkpoint; defaults to `<out>/seed-<s>/vanilla.ckpt`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        no_finetune: bool,
        #[arg(long)]
        no_baselines: bool,
    },
    /// Finetune a pruned subnetwork with the reweighted loss.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mask: PathBuf,
    },
    /// Group-wise accuracy of a (masked) checkpoint.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Threshold, gamma, noise, hyperparameter and baseline sweeps.
    Sweep {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        zeta: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        gamma: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        noise: Option<Vec<f64>>,
        /// Target sparsities (fractions) for the magnitude and random baselines.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        targets: Option<Vec<f64>>,
        #[arg(long, value_enum, requires = "values")]
        param: Option<HyperParam>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Merge experiment reports into comparison tables.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::preset(&cli.preset)?,
    };
    if let Some(out) = &cli.out {
        cfg.out.clone_from(out);
    }
    if let Some(seeds) = &cli.seeds {
        cfg.seeds.clone_from(seeds);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Empty list flags fall back to the config's grid.
fn grid(flag: &Option<Vec<f64>>, default: &[f64]) -> Option<Vec<f64>> {
    flag.as_ref().map(|v| if v.is_empty() { default.to_vec() } else { v.clone() })
}

fn run(cli: Cli) -> CliResult<()> {
    if let Command::Report { inputs } = &cli.command {
        print!("{}", commands::report_cmd(inputs, cli.out.as_deref())?);
        return Ok(());
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::GenData => commands::gen_data(&cfg)?,
        Command::TrainVanilla => print!("{}", commands::train_vanilla_cmd(&cfg)?.markdown()),
        Command::Bise {
            model,
            no_finetune,
            no_baselines,
        } => {
            let opts = BiseOptions {
                model: model.as_deref(),
                finetune: !no_finetune,
                baselines: !no_baselines,
            };
            print!("{}", commands::bise_cmd(&cfg, &opts)?.markdown());
        }
        Command::Finetune { model, mask } => commands::finetune_cmd(&cfg, model, mask)?,
        Command::Evaluate { model, mask, split } => {
            println!("{}", commands::evaluate_cmd(&cfg, model, mask.as_deref(), *split)?)
        }
        Command::Sweep {
            model,
            zeta,
            gamma,
            noise,
            targets,
            param,
            values,
        } => {
            let s = &cfg.sweep;
            let mut req = SweepRequest {
                zeta: grid(zeta, &s.zeta),
                gamma: grid(gamma, &s.gamma),
                noise: grid(noise, &s.noise),
                targets: grid(targets, &s.targets),
                param: param.zip(values.clone()),
            };
            if req.zeta.is_none()
                && req.gamma.is_none()
                && req.noise.is_none()
                && req.targets.is_none()
                && req.param.is_none()
            {
                req.zeta = Some(s.zeta.clone());
            }
            for p in commands::sweep_cmd(&cfg, &req, model.as_deref())? {
                println!("{}", p.display());
            }
        }
        Command::Report { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
