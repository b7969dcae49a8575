//! End-to-end tests of the binary: flags, outputs, exit codes.

use std::process::{Command, Output};

fn veloxnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_veloxnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn summary_reports_published_totals() {
    let out = veloxnet(&[
        "summary", "--model", "veloxnet", "--preset", "table-i", "--classes", "5", "--input",
        "224", "--format", "text",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let total_line = text.lines().last().unwrap();
    assert!(total_line.contains("399,366"), "{total_line}");
    // the resolved configuration is echoed before any work
    assert!(text.lines().next().unwrap().starts_with("config:"));

    let out = veloxnet(&["summary", "--model", "squeezenet", "--format", "text"]);
    assert!(stdout(&out).lines().last().unwrap().contains("740,970"));
}

#[test]
fn summary_csv_and_json_forms() {
    let out = veloxnet(&["summary", "--model", "veloxnet", "--format", "csv"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("layer,out_n,out_c,out_h,out_w,params,macs"));

    let out = veloxnet(&["summary", "--model", "veloxnet", "--format", "json"]);
    let text = stdout(&out);
    let json_start = text.find('{').unwrap();
    let v: serde_json::Value = serde_json::from_str(&text[json_start..]).unwrap();
    assert_eq!(v["total_params"], 399_366);
    assert!(v["storage_mib_binary"].as_f64().unwrap() > 1.5);
}

#[test]
fn unknown_flags_are_usage_errors() {
    let out = veloxnet(&["summary", "--model", "veloxnet", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let out = veloxnet(&["notacommand"]);
    assert_eq!(out.status.code(), Some(1));
    // help exits 0
    let out = veloxnet(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn gradcheck_reduced_passes() {
    let out = veloxnet(&[
        "gradcheck", "--model", "veloxnet", "--reduced", "--tol", "1e-4", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("all gradient checks passed"));
}

#[test]
fn impossible_tolerance_fails_gradcheck_with_numeric_exit() {
    let out = veloxnet(&[
        "gradcheck", "--model", "veloxnet", "--tol", "1e-18", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stdout(&out));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = veloxnet(&[
        "eval",
        "--data",
        dir.path().join("nope").to_str().unwrap(),
        "--ckpt",
        dir.path().join("nope.vlxc").to_str().unwrap(),
        "--split",
        "val",
        "--json",
        dir.path().join("m.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

/// synth → train → eval → bench, the full desk-scale workflow (2 classes,
/// 4 samples per class, 1 epoch keeps it quick).
#[test]
fn synth_train_eval_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = veloxnet(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--classes",
        "2",
        "--per-class",
        "4",
        "--seed",
        "11",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(data.join("manifest.csv").exists());
    assert!(data.join("stats.csv").exists());

    let ckpt = dir.path().join("best.vlxc");
    let log = dir.path().join("log.csv");
    let out = veloxnet(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--model",
        "veloxnet",
        "--epochs",
        "1",
        "--lr",
        "0.001",
        "--batch",
        "4",
        "--seed",
        "3",
        "--out",
        ckpt.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(ckpt.exists());
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert!(log_text.starts_with("epoch,train_loss,val_loss,val_weighted_f1\n"));
    assert_eq!(log_text.lines().count(), 2); // header + 1 epoch

    let json = dir.path().join("metrics.json");
    let out = veloxnet(&[
        "eval",
        "--data",
        data.to_str().unwrap(),
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--split",
        "test",
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["samples"], 2);
    assert!(v["weighted_f1"].as_f64().unwrap() >= 0.0);

    // train never mutates --data: manifest bytes unchanged
    let before = std::fs::read(data.join("manifest.csv")).unwrap();
    let out = veloxnet(&[
        "bench", "--model", "squeezenet", "--batch", "1", "--iters", "2", "--warmup", "0",
        "--input", "64",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("images/s"));
    let after = std::fs::read(data.join("manifest.csv")).unwrap();
    assert_eq!(before, after);
}

#[test]
fn identical_argv_and_seed_give_identical_stdout() {
    let run = || {
        stdout(&veloxnet(&[
            "summary", "--model", "veloxnet", "--preset", "paper-eq", "--format", "json",
        ]))
    };
    assert_eq!(run(), run());
}

#[test]
fn synth_is_idempotent_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = veloxnet(&[
            "synth",
            "--out",
            dir.path().to_str().unwrap(),
            "--classes",
            "2",
            "--per-class",
            "3",
            "--seed",
            "5",
        ]);
        assert!(out.status.success());
    }
    let name = "class1_sample2.vlxt";
    assert_eq!(
        std::fs::read(a.path().join(name)).unwrap(),
        std::fs::read(b.path().join(name)).unwrap()
    );
}
