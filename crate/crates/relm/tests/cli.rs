//! End-to-end checks of the command-line interface via the built binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_relm")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn relm")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("relm-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_scores_prediction_files() {
    let dir = tmp("eval");
    let gold = dir.join("gold.tsv");
    let pred = dir.join("pred.txt");
    fs::write(&gold, "ax\tab\ncy\tcd\nee\tee\ngg\tgg\n").unwrap();
    fs::write(&pred, "ab\ncy\nef\ngg\n").unwrap();
    let out = run(&["eval", "--data", path(&gold), "--pred", path(&pred)]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["correction_precision"], 50.0);
    assert_eq!(report["correction_recall"], 50.0);
    assert_eq!(report["correction_f1"], 50.0);
    assert_eq!(report["fpr"], 50.0);
}

#[test]
fn synth_train_correct_round_trip() {
    let dir = tmp("round");
    let world = dir.join("world");
    let out = run(&[
        "synth",
        "--out",
        path(&world),
        "--corpus",
        "800",
        "--n-dev",
        "60",
        "--n-test",
        "60",
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    for f in [
        "train.tsv",
        "dev.tsv",
        "test_seen.tsv",
        "test_held.tsv",
        "confusion_train.tsv",
        "confusion_held.tsv",
        "vocab.json",
        "config.json",
    ] {
        assert!(world.join(f).exists(), "missing {f}");
    }

    let ckpt = dir.join("model.ckpt");
    let out = run(&[
        "train",
        "--data",
        path(&world.join("train.tsv")),
        "--dev",
        path(&world.join("dev.tsv")),
        "--out",
        path(&ckpt),
        "--objective",
        "tagging",
        "--steps",
        "30",
        "--eval-every",
        "0",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(ckpt.exists());
    assert!(dir.join("model.ckpt.vocab.json").exists());
    assert!(dir.join("model.ckpt.config.json").exists());

    let input = dir.join("input.txt");
    let gold = fs::read_to_string(world.join("test_seen.tsv")).unwrap();
    let sources: Vec<&str> = gold
        .lines()
        .take(12)
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    fs::write(&input, sources.join("\n") + "\n").unwrap();

    let corrected = dir.join("corrected.txt");
    let out = run(&[
        "correct",
        "--model",
        path(&ckpt),
        "--input",
        path(&input),
        "--out",
        path(&corrected),
        "--objective",
        "tagging",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let lines: Vec<String> = fs::read_to_string(&corrected)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(lines.len(), sources.len());
    for (src, pred) in sources.iter().zip(&lines) {
        assert_eq!(src.chars().count(), pred.chars().count());
    }
}

#[test]
fn sweep_emits_ratio_precision_f1_csv() {
    let out = run(&[
        "sweep",
        "--modify-rate",
        "0.7",
        "--fix-rate",
        "0.6",
        "--fpr",
        "0.05",
        "--ratios",
        "1,2,4",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("ratio,precision,f1"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert_eq!(row.split(',').count(), 3);
    }
}

#[test]
fn missing_checkpoint_names_the_path() {
    let missing = std::env::temp_dir().join("relm-cli-definitely-absent.ckpt");
    let gold = tmp("missing").join("gold.tsv");
    fs::write(&gold, "ab\tab\n").unwrap();
    let out = run(&["eval", "--model", path(&missing), "--data", path(&gold)]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("error: "), "stderr: {err}");
    assert!(err.contains(missing.to_str().unwrap()), "stderr: {err}");
    assert_eq!(err.trim_end().lines().count(), 1, "one-line diagnostic");
}

#[test]
fn unknown_subcommand_fails_with_usage() {
    let out = run(&["bogus"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("Usage"), "stderr: {err}");
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tmp("corrupt");
    let fake = dir.join("fake.ckpt");
    fs::write(&fake, b"not a checkpoint at all").unwrap();
    fs::write(dir.join("fake.ckpt.vocab.json"), "{}").unwrap();
    let gold = dir.join("gold.tsv");
    fs::write(&gold, "ab\tab\n").unwrap();
    let out = run(&["eval", "--model", path(&fake), "--data", path(&gold)]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("magic"), "stderr: {}", stderr(&out));
}
