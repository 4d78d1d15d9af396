//! End-to-end checks of the `icfinv` binary on tiny datasets.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn icfinv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icfinv"))
        .args(args)
        .output()
        .expect("spawn icfinv")
}

fn ok(args: &[&str]) -> Output {
    let out = icfinv(args);
    assert!(
        out.status.success(),
        "`icfinv {}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    icfinv(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Few epochs with a one-epoch warmup, enough to exercise every artifact.
const QUICK: [&str; 4] = ["--epochs", "3", "--warmup-epochs", "1"];

fn generate(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("data_{n}_{seed}"));
    ok(&[
        "generate",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    out
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--data", s(data), "--out", s(out)];
    args.extend(QUICK);
    args.extend(extra);
    ok(&args)
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn generate_is_byte_identical_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&[
            "generate",
            "--n",
            "30",
            "--size",
            "8",
            "--seed",
            "4",
            "--out",
            s(d),
        ]);
    }
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.iter().any(|n| n == "manifest.json"));
    assert!(names.iter().any(|n| n == "effective_config.json"));
    for n in &names {
        assert_eq!(read(&a.join(n)), read(&b.join(n)), "{n:?}");
    }

    let out = icfinv(&["generate", "--n", "0", "--out", s(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("usage"));
}

#[test]
fn sensitivity_outputs_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["generate", "--n", "200", "--size", "8", "--out", s(&data)]);
    let out = dir.path().join("sens");
    ok(&[
        "sensitivity",
        "--data",
        s(&data),
        "--k",
        "8",
        "--out",
        s(&out),
    ]);
    let csv = fs::read_to_string(out.join("sensitivity.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    let coefficient_rows = csv
        .lines()
        .filter(|l| l.starts_with("PC") || l.starts_with("scalar"))
        .count();
    assert_eq!(coefficient_rows, 8 + 15, "{csv}");
    assert_eq!(header.matches("param").count(), 5, "{header}");
    assert!(fs::read_to_string(out.join("sensitivity.svg"))
        .unwrap()
        .starts_with("<svg"));

    assert_eq!(
        code(&[
            "sensitivity",
            "--data",
            s(&data),
            "--k",
            "500",
            "--out",
            s(&out)
        ]),
        2
    );
    assert_eq!(
        code(&[
            "sensitivity",
            "--data",
            s(&dir.path().join("none")),
            "--out",
            s(&out)
        ]),
        3
    );
}

#[test]
fn train_artifacts_are_repeatable_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 60, 1);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    train(&data, &a, &[]);
    train(&data, &b, &[]);
    for n in [
        "metrics.csv",
        "test_metrics.json",
        "pred_vs_true.csv",
        "last.json",
        "last.bin",
        "best.json",
    ] {
        assert_eq!(read(&a.join(n)), read(&b.join(n)), "{n}");
    }
    let metrics: Value = serde_json::from_slice(&read(&a.join("test_metrics.json"))).unwrap();
    let keys: Vec<&String> = metrics.as_object().unwrap().keys().collect();
    for k in [
        "recon_mse",
        "reg_mse",
        "r2_param1",
        "r2_param2",
        "r2_param4",
        "rel_l2_param1",
        "rel_l2_param2",
        "rel_l2_param4",
    ] {
        assert!(keys.iter().any(|x| *x == k), "missing {k}");
    }
    assert_eq!(
        fs::read_to_string(a.join("metrics.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 3
    );

    // The echoed config alone reproduces the run.
    let replay = dir.path().join("replay");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--config",
        s(&a.join("effective_config.json")),
        "--out",
        s(&replay),
    ]);
    assert_eq!(
        read(&a.join("metrics.csv")),
        read(&replay.join("metrics.csv"))
    );
    assert_eq!(
        read(&a.join("effective_config.json")),
        read(&replay.join("effective_config.json"))
    );
}

#[test]
fn train_partial_config_keeps_other_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 40, 2);
    let cfg = dir.path().join("partial.json");
    fs::write(&cfg, r#"{"train": {"epochs": 2, "warmup_epochs": 1}}"#).unwrap();
    let out = dir.path().join("run");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    let echo: Value = serde_json::from_slice(&read(&out.join("effective_config.json"))).unwrap();
    assert_eq!(echo["train"]["epochs"], 2);
    assert_eq!(echo["train"]["batch_size"], 8);
    assert_eq!(echo["train"]["lr_backbone"], 1e-4);
}

#[test]
fn train_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 40, 3);
    let out = dir.path().join("run");
    let o = s(&out);
    let d = s(&data);
    assert_eq!(
        code(&["train", "--data", d, "--init", "checkpoint", "--out", o]),
        2
    );
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"train": {"learning_rate": 1}}"#).unwrap();
    assert_eq!(
        code(&["train", "--data", d, "--config", s(&bad), "--out", o]),
        2
    );
    assert_eq!(
        code(&["train", "--data", d, "--epochs", "3", "--out", o]),
        2,
        "3 epochs cannot fit a 5 epoch warmup"
    );
    let mut diverge = vec![
        "train",
        "--data",
        d,
        "--lr-backbone",
        "1e200",
        "--lr-tsh",
        "1e200",
        "--out",
        o,
    ];
    diverge.extend(QUICK);
    assert_eq!(code(&diverge), 4);
    let broken = dir.path().join("broken");
    fs::create_dir_all(&broken).unwrap();
    fs::write(broken.join("manifest.json"), "{").unwrap();
    assert_eq!(code(&["train", "--data", s(&broken), "--out", o]), 3);
}

#[test]
fn pretrain_then_finetune_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let pre = dir.path().join("pre");
    ok(&[
        "generate",
        "--n",
        "40",
        "--seed",
        "5",
        "--regime",
        "pretrain",
        "--out",
        s(&pre),
    ]);
    let pt = dir.path().join("pt");
    let mut args = vec!["pretrain", "--data", s(&pre), "--out", s(&pt)];
    args.extend(QUICK);
    ok(&args);
    let ckpt = pt.join("pretrain.json");
    assert!(ckpt.is_file() && pt.join("metrics.csv").is_file());

    let data = generate(dir.path(), 40, 6);
    let run = dir.path().join("ft");
    train(
        &data,
        &run,
        &["--init", "checkpoint", "--checkpoint", s(&ckpt)],
    );
    let echo: Value = serde_json::from_slice(&read(&run.join("effective_config.json"))).unwrap();
    assert!(
        echo["train"]["init"].to_string().contains("pretrain.json"),
        "{}",
        echo["train"]["init"]
    );
}

#[test]
fn scale_study_layout_and_jobs_independence() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 80, 7);
    let study = |out: &Path, jobs: &str| {
        let mut args = vec![
            "scale",
            "--data",
            s(&data),
            "--fractions",
            "0.5,1.0",
            "--seeds",
            "2",
            "--jobs",
            jobs,
            "--out",
            s(out),
        ];
        args.extend(QUICK);
        ok(&args);
    };
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    study(&one, "1");
    study(&two, "2");
    let summary = fs::read_to_string(one.join("scale_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
    assert_eq!(
        fs::read_to_string(one.join("scale_medians.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 2
    );
    for n in [
        "scale_summary.csv",
        "scale_medians.csv",
        "scale_curves.csv",
        "loss_curves.svg",
    ] {
        assert_eq!(read(&one.join(n)), read(&two.join(n)), "{n}");
    }
    assert!(one.join("runs/f0.50_s0/test_metrics.json").is_file());
    assert!(one.join("runs/f1.00_s1/test_metrics.json").is_file());

    let bad = dir.path().join("bad");
    assert_eq!(
        code(&[
            "scale",
            "--data",
            s(&data),
            "--fractions",
            "0.3",
            "--out",
            s(&bad)
        ]),
        2
    );
    assert_eq!(
        code(&[
            "scale",
            "--data",
            s(&data),
            "--seeds",
            "0",
            "--out",
            s(&bad)
        ]),
        2
    );
    assert_eq!(
        code(&["scale", "--data", s(&data), "--jobs", "0", "--out", s(&bad)]),
        2
    );
}

#[test]
fn compare_arms_differ_only_in_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let pre = dir.path().join("pre");
    ok(&[
        "generate",
        "--n",
        "30",
        "--seed",
        "8",
        "--regime",
        "pretrain",
        "--out",
        s(&pre),
    ]);
    let pt = dir.path().join("pt");
    let mut args = vec!["pretrain", "--data", s(&pre), "--out", s(&pt)];
    args.extend(QUICK);
    ok(&args);
    let data = generate(dir.path(), 60, 9);
    let out = dir.path().join("cmp");
    let ckpt = pt.join("pretrain.json");
    let mut args = vec![
        "compare",
        "--data",
        s(&data),
        "--pretrain-ckpt",
        s(&ckpt),
        "--fractions",
        "1.0",
        "--seeds",
        "1",
        "--out",
        s(&out),
    ];
    args.extend(QUICK);
    ok(&args);

    let load = |arm: &str| -> Value {
        serde_json::from_slice(&read(&out.join(arm).join("f1.00_s0/effective_config.json")))
            .unwrap()
    };
    let (mut scratch, mut finetune) = (load("scratch"), load("finetune"));
    assert_ne!(scratch["train"]["init"], finetune["train"]["init"]);
    scratch["train"]["init"] = Value::Null;
    finetune["train"]["init"] = Value::Null;
    assert_eq!(scratch, finetune);
    let table = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert!(table.starts_with("fraction,seed,scratch_tsh_test_mse,finetune_tsh_test_mse,advantage"));
    assert_eq!(table.lines().count(), 2);

    let missing = dir.path().join("nope.json");
    assert_eq!(
        code(&[
            "compare",
            "--data",
            s(&data),
            "--pretrain-ckpt",
            s(&missing),
            "--out",
            s(&out)
        ]),
        2
    );
}

#[test]
fn report_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), 40, 10);
    let run = dir.path().join("run");
    train(&data, &run, &[]);
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    ok(&["report", "--run-dir", s(&run), "--out", s(&r1)]);
    ok(&["report", "--run-dir", s(&run), "--out", s(&r2)]);
    ok(&["report", "--run-dir", s(&run), "--out", s(&r2)]);
    let mut names: Vec<_> = fs::read_dir(&r1)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    for t in [1, 2, 4] {
        assert!(
            names.contains(&format!("scatter_param{t}.svg")),
            "{names:?}"
        );
    }
    assert!(names.contains(&"loss_curves.svg".to_string()));
    for n in &names {
        assert_eq!(read(&r1.join(n)), read(&r2.join(n)), "{n}");
    }

    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(
        code(&["report", "--run-dir", s(&empty), "--out", s(&r1)]),
        3
    );
}
