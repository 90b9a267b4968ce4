mod common;

use std::path::Path;
use std::process::{Command, Output};

fn okannet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_okannet"))
        .args(args)
        .env("OKANNET_DETERMINISTIC", "1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn okannet")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    common::write_pattern_folders(&data, 5, 2, 24, 1);
    let out = dir.path().join("out");

    let o = okannet(&[
        "train", "--data-dir", s(&data), "--out-dir", s(&out), "--epochs", "1", "--batch-size", "4",
        "--image-size", "16", "--val-freq", "2", "--lr", "1e-3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["checkpoint.oknt", "metrics.csv", "history.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    // 20 images, batch 4 → 5 iterations, validation at 2 and 4
    assert_eq!(history.lines().count(), 6);
    assert!(history.lines().nth(1).unwrap().ends_with(",,"));
    assert!(!history.lines().nth(2).unwrap().ends_with(",,"));
    assert!(stdout(&o).contains("Accuracy"));

    let ckpt = out.join("checkpoint.oknt");
    let eval_csv = dir.path().join("eval.csv");
    let o = okannet(&["eval", "--model", s(&ckpt), "--data-dir", s(&data), "--out", s(&eval_csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let train_csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let eval_text = std::fs::read_to_string(&eval_csv).unwrap();
    // same model, same test split: everything but training time agrees
    assert_eq!(train_csv.lines().take(5).collect::<Vec<_>>(), eval_text.lines().take(5).collect::<Vec<_>>());

    let image = data.join("Testing/disc/disc_000.png");
    let a = okannet(&["predict", "--model", s(&ckpt), "--image", s(&image)]);
    let b = okannet(&["predict", "--model", s(&ckpt), "--image", s(&image)]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    let probs: Vec<f64> = stdout(&a)
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().last().unwrap().parse().unwrap())
        .collect();
    assert_eq!(probs.len(), 4);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");

    let o = okannet(&["train", "--data-dir", s(&missing), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("folder not found!"));

    let o = okannet(&["train", "--data-dir", s(&missing), "--out-dir", s(dir.path()), "--image-size", "0"]);
    assert_eq!(o.status.code(), Some(2));

    let bogus = dir.path().join("bogus.oknt");
    std::fs::write(&bogus, b"not a checkpoint").unwrap();
    let o = okannet(&["predict", "--model", s(&bogus), "--image", s(&bogus)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad magic"));

    let o = okannet(&["predict", "--model", s(&missing), "--image", s(&missing)]);
    assert_eq!(o.status.code(), Some(4));

    let o = okannet(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_command_reports_every_layer() {
    let o = okannet(&["gradcheck", "--seed", "4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for layer in ["conv2d", "batchnorm", "dense", "dropout", "maxpool", "relu", "residual", "cross-entropy", "okannet"] {
        assert!(text.contains(layer), "{layer} missing from report:\n{text}");
    }
}
