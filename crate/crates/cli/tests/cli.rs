use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bise(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bise"))
        .current_dir(dir)
        .args(args)
        .env_remove("BISE_MNIST_DIR")
        .env("BISE_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = bise(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

const SMOKE: [&str; 4] = ["--preset", "synthetic-smoke", "--out", "run"];

#[test]
fn gen_data_is_idempotent_and_counts_add_up() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        ok(d, &[&SMOKE[..], &["--seeds", "3", "gen-data"]].concat());
    }
    for f in ["train.bised", "test.bised", "manifest.json"] {
        let rel = Path::new("run/data/seed-3").join(f);
        assert_eq!(fs::read(a.path().join(&rel)).unwrap(), fs::read(b.path().join(&rel)).unwrap(), "{f}");
    }
    let m = json(a.path().join("run/data/seed-3/manifest.json"));
    for split in ["train", "test"] {
        let counts: u64 = m[split]["group_counts"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
        assert_eq!(counts, m[split]["samples"].as_u64().unwrap());
    }
}

#[test]
fn pipeline_is_deterministic_and_aggregates_seeds() {
    let run = |d: &Path| {
        ok(d, &[&SMOKE[..], &["--seeds", "1,2,3", "train-vanilla"]].concat());
        ok(d, &[&SMOKE[..], &["--seeds", "1,2,3", "bise"]].concat());
        fs::read(d.join("run/report.json")).unwrap()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run(a.path());
    assert_eq!(ra, run(b.path()), "reports differ between identical runs");

    let report: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["seeds"].as_array().unwrap().len(), 3);
    let agg = &report["aggregates"]["bise_last.unbiased"];
    assert_eq!(agg["n"], 3);
    let per_seed: Vec<f64> = report["seeds"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["bise_last"]["unbiased"].as_f64().unwrap())
        .collect();
    let mean = per_seed.iter().sum::<f64>() / 3.0;
    assert!((agg["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!(report["seeds"][0]["finetuned"].is_object());
    assert_eq!(report["seeds"][0]["baselines"].as_array().unwrap().len(), 2);

    // The echoed config re-runs to the same report.
    let c = tempfile::tempdir().unwrap();
    fs::write(c.path().join("echo.json"), report["config"].to_string()).unwrap();
    ok(c.path(), &["--config", "echo.json", "train-vanilla"]);
    ok(c.path(), &["--config", "echo.json", "bise"]);
    assert_eq!(fs::read(c.path().join("run/report.json")).unwrap(), ra);

    // Single-report merge passes through; the summary lists the methods.
    let out = ok(a.path(), &["report", "run/report.json", "--out", "merged"]);
    let md = String::from_utf8(out.stdout).unwrap();
    assert!(md.contains("| Vanilla |") && md.contains("BISE (last)") && md.contains("magnitude"));
    assert_eq!(json(a.path().join("merged/merged_report.json")), report);
}

#[test]
fn zeta_zero_row_matches_vanilla() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &[&SMOKE[..], &["bise", "--no-finetune", "--no-baselines"]].concat());
    ok(d.path(), &[&SMOKE[..], &["sweep", "--zeta", "0,0.5,1"]].concat());
    let csv = fs::read_to_string(d.path().join("run/seed-0/sweep_zeta.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("zeta_or_target,S_percent,flops,accuracy"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    let report = json(d.path().join("run/report.json"));
    let vanilla = report["seeds"][0]["vanilla"]["overall"].as_f64().unwrap();
    assert_eq!(first[0], "0");
    assert_eq!(first[1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(first[3], format!("{:.4}", 100.0 * vanilla));

    let eval = ok(
        d.path(),
        &[&SMOKE[..], &["evaluate", "--model", "run/seed-0/vanilla.ckpt", "--mask", "run/seed-0/mask_last.csv"]].concat(),
    );
    let reports: Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(reports[0]["unbiased"], report["seeds"][0]["bise_last"]["unbiased"]);
}

fn write_idx(dir: &Path, prefix: &str, n: usize) {
    let mut images = vec![0, 0, 8, 3];
    for v in [n as u32, 28, 28] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    let mut labels = vec![0, 0, 8, 1];
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    for i in 0..n {
        let digit = (i % 10) as u8;
        labels.push(digit);
        for p in 0..784 {
            images.push(if (p / 28 + p % 28 + usize::from(digit)) % 7 == 0 { 255 } else { 0 });
        }
    }
    fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), images).unwrap();
    fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), labels).unwrap();
}

#[test]
fn multi_bias_evaluation_reports_four_groups() {
    let d = tempfile::tempdir().unwrap();
    let mnist = d.path().join("mnist");
    fs::create_dir(&mnist).unwrap();
    write_idx(&mnist, "train", 200);
    write_idx(&mnist, "t10k", 100);
    let cfg = serde_json::json!({
        "dataset": {"kind": "multicolor_mnist", "mnist_dir": mnist, "rho": [0.9, 0.8], "test_rho": [0.1, 0.1]},
        "hidden": [8],
        "vanilla": {"epochs": 1, "batch_size": 50},
        "out": "run"
    });
    fs::write(d.path().join("mc.json"), cfg.to_string()).unwrap();
    ok(d.path(), &["--config", "mc.json", "train-vanilla"]);
    let out = ok(d.path(), &["--config", "mc.json", "evaluate", "--model", "run/seed-0/vanilla.ckpt"]);
    let reports: Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = reports[0]["groups"].as_array().unwrap().iter().map(|g| g["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["alig_alig", "alig_conf", "conf_alig", "conf_conf"]);
}

#[test]
fn invalid_input_exits_with_two_and_runtime_failure_with_one() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    fs::write(p.join("bad.json"), r#"{"gama": 1}"#).unwrap();
    for args in [
        vec!["--config", "bad.json", "gen-data"],
        vec!["--preset", "no-such-preset", "gen-data"],
        vec!["--preset", "synthetic-smoke", "evaluate", "--model", "missing.ckpt"],
        vec!["--preset", "multicolor-mnist-paper", "--out", "x", "gen-data"],
        vec!["no-such-command"],
    ] {
        let out = bise(p, &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let missing = bise(p, &["--preset", "synthetic-smoke", "evaluate", "--model", "missing.ckpt"]);
    let err: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["error"], "invalid_input");

    fs::write(
        p.join("report.json"),
        r#"{"schema_version": 7, "config": {}, "seeds": [], "aggregates": {}}"#,
    )
    .unwrap();
    assert_eq!(bise(p, &["report", "report.json"]).status.code(), Some(2));

    let diverge = serde_json::json!({
        "dataset": {"kind": "synthetic_blobs", "rho": [0.9], "test_rho": [0.1], "n_per_class": 20, "dim": 24},
        "hidden": [8],
        "vanilla": {"epochs": 5, "optimizer": {"kind": "adam", "lr": 1e300}},
        "out": "run"
    });
    fs::write(p.join("diverge.json"), diverge.to_string()).unwrap();
    let out = bise(p, &["--config", "diverge.json", "train-vanilla"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "runtime");
}
