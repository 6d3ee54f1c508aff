use std::path::Path;
use std::process::{Command, Output};

use fcmi::metrics::MetricsReport;

fn fcmi(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcmi"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .unwrap()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn metrics_on_ideal_labeling() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.csv");
    let mut csv = String::from("pred,group,truth\n");
    for i in 0..12 {
        let cluster = i % 3;
        csv.push_str(&format!("c{cluster},{},{cluster}\n", (i / 3) % 2));
    }
    write(&pred, &csv);
    let report = dir.path().join("r.json");
    let out = fcmi(&[
        &"metrics", &"--pred", &pred, &"--groups-col", &"group", &"--truth-col", &"truth",
        &"--beta", &"1", &"--report", &report,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let r = MetricsReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.acc, Some(1.0));
    assert_eq!(r.mnce, 1.0);
    assert_eq!(r.f_beta, Some(1.0));
    assert_eq!((r.n, r.k, r.t), (12, 3, 2));
}

#[test]
fn metrics_without_truth_leaves_quality_null() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.csv");
    write(&pred, "cluster,g\n0,a\n0,b\n1,a\n1,a\n");
    let report = dir.path().join("r.json");
    let out = fcmi(&[
        &"metrics", &"--pred", &pred, &"--pred-col", &"cluster", &"--groups-col", &"g",
        &"--beta", &"1", &"--report", &report,
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("\"acc\": null"));
    assert!(text.contains("\"bal\": 0.000000"));
}

#[test]
fn usage_and_runtime_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, r#"{"k": 3}"#);
    let missing_data = fcmi(&[&"train", &"--config", &cfg, &"--out-dir", &dir.path()]);
    assert_eq!(missing_data.status.code(), Some(2));
    assert!(!missing_data.stderr.is_empty());

    let unknown = fcmi(&[&"metrics", &"--frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));

    let absent = dir.path().join("absent.csv");
    let unreadable = fcmi(&[
        &"train", &"--data", &absent, &"--config", &cfg, &"--out-dir", &dir.path(),
    ]);
    assert_eq!(unreadable.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unreadable.stderr).contains("absent.csv"));

    let bad_cfg = dir.path().join("bad.json");
    write(&bad_cfg, r#"{"k": 3, "beta": 0.2}"#);
    let spec = dir.path().join("s.json");
    write(&spec, "{}");
    let data = dir.path().join("d.csv");
    assert!(fcmi(&[&"synth", &"--spec", &spec, &"--out", &data]).status.success());
    let typo = fcmi(&[&"train", &"--data", &data, &"--config", &bad_cfg, &"--out-dir", &dir.path()]);
    assert_eq!(typo.status.code(), Some(1));
}

#[test]
fn synth_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    write(&spec, r#"{"per_cell_count": 40, "dim": 6, "seed": 4}"#);
    let data = dir.path().join("data.csv");
    let out = fcmi(&[&"synth", &"--spec", &spec, &"--out", &data]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let cfg = dir.path().join("config.json");
    write(
        &cfg,
        r#"{"k": 3, "layer_dims": [6, 32, 8], "latent_dim": 8, "warmup_epochs": 3,
            "max_epochs": 12, "batch_size": 64, "learning_rate": 0.001, "seed": 9}"#,
    );
    let run = dir.path().join("run");
    let out = fcmi(&[
        &"train", &"--data", &data, &"--config", &cfg, &"--out-dir", &run, &"--checkpoint-every",
        &"5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "model.fcmi",
        "train_log.csv",
        "report.json",
        "manifest.json",
        "checkpoint_epoch5.fcmi",
        "checkpoint_epoch10.fcmi",
    ] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 13);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    let bytes = std::fs::read(&data).unwrap();
    assert_eq!(manifest["dataset"]["sha256"], fcmi::cli::sha256_hex(&bytes));
    assert_eq!(manifest["config"]["k"], 3);
    assert_eq!(manifest["seed"], 9);

    let reports: Vec<String> = (0..2)
        .map(|i| {
            let report = dir.path().join(format!("eval{i}.json"));
            let out = fcmi(&[
                &"eval", &"--data", &data, &"--checkpoint", &run.join("model.fcmi"), &"--config",
                &cfg, &"--report", &report,
            ]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            std::fs::read_to_string(&report).unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
    let r = MetricsReport::from_json(&reports[0]).unwrap();
    assert!(r.acc.is_some() && r.nmi.is_some() && r.f_beta.is_some());
    assert_eq!((r.n, r.k, r.t), (240, 3, 2));
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write(&data, "a,b,group\n1,2,x\n3,4,y\n5,7,x\n0,1,y\n");
    let ckpt = dir.path().join("m.fcmi");
    fcmi::model::init_params(&[3, 2], 2, 0).unwrap().save(&ckpt).unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, r#"{"k": 2}"#);
    let out = fcmi(&[
        &"eval", &"--data", &data, &"--checkpoint", &ckpt, &"--config", &cfg, &"--report",
        &dir.path().join("r.json"),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
