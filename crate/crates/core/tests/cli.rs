//! End-to-end tests of the `elite-pixel` binary: exit codes, emitted files,
//! and printed output for every subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use elite_pixel::stack::{read_mask, write_mask, EliteMask};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_elite-pixel"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "exit code mismatch\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_spec(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn synth_is_deterministic_and_validates_usage() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "scene.json",
        r#"{
            "height": 40, "width": 40, "epochs": 5, "seed": 11,
            "default_class": "decorrelated",
            "rects": [{"class": "ps", "row": 0, "col": 0, "height": 20, "width": 40}]
        }"#,
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    let r = run(&["synth", "--spec", &path_str(&spec), "--out", &path_str(&out_a)]);
    assert_exit(&r, 0);
    assert!(stdout(&r).contains("seed: 11"));
    assert!(stdout(&r).contains("class ps: 800 pixels"));
    assert!(dir.path().join("a.tsstack").exists());
    assert!(dir.path().join("a.mask").exists());

    let r = run(&["synth", "--spec", &path_str(&spec), "--out", &path_str(&out_b)]);
    assert_exit(&r, 0);
    assert_eq!(
        std::fs::read(dir.path().join("a.tsstack")).unwrap(),
        std::fs::read(dir.path().join("b.tsstack")).unwrap(),
        "same spec must reproduce identical stack bytes"
    );
    assert_eq!(
        std::fs::read(dir.path().join("a.mask")).unwrap(),
        std::fs::read(dir.path().join("b.mask")).unwrap()
    );

    // Missing required --spec is a usage error (exit 2).
    let r = run(&["synth", "--out", &path_str(&out_a)]);
    assert_exit(&r, 2);

    // A nonexistent spec file is a runtime error (exit 1).
    let r = run(&["synth", "--spec", "/nonexistent/spec.json", "--out", &path_str(&out_a)]);
    assert_exit(&r, 1);
}

#[test]
fn label_pure_ps_scene_prints_full_density() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "ps.json",
        r#"{
            "height": 30, "width": 30, "epochs": 5, "seed": 2,
            "default_class": "ps",
            "class_params": {
                "ps": {"amp_mean": 200.0, "amp_jitter": 0.0, "coh_mean": 0.95,
                        "coh_jitter": 0.0, "phase_noise_std": 0.0}
            }
        }"#,
    );
    let prefix = dir.path().join("scene");
    assert_exit(&run(&["synth", "--spec", &path_str(&spec), "--out", &path_str(&prefix)]), 0);

    let mask_out = dir.path().join("labels.mask");
    let r = run(&[
        "label",
        "--stack",
        &path_str(&dir.path().join("scene.tsstack")),
        "--out",
        &path_str(&mask_out),
    ]);
    assert_exit(&r, 0);
    assert!(stdout(&r).contains("density: 100.00"), "stdout: {}", stdout(&r));
    let mask = read_mask(&mask_out).unwrap();
    assert_eq!(mask.elite_count(), 900);
}

#[test]
fn label_scene_without_ps_warns_and_writes_empty_mask() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "dec.json",
        r#"{"height": 16, "width": 16, "epochs": 10, "seed": 3, "default_class": "decorrelated"}"#,
    );
    let prefix = dir.path().join("scene");
    assert_exit(&run(&["synth", "--spec", &path_str(&spec), "--out", &path_str(&prefix)]), 0);

    let mask_out = dir.path().join("labels.mask");
    let r = run(&[
        "label",
        "--stack",
        &path_str(&dir.path().join("scene.tsstack")),
        "--out",
        &path_str(&mask_out),
    ]);
    assert_exit(&r, 0);
    assert!(String::from_utf8_lossy(&r.stderr).contains("warning"));
    assert_eq!(read_mask(&mask_out).unwrap().elite_count(), 0);
}

#[test]
fn label_matches_committed_oracle_fixture() {
    #[derive(serde::Deserialize)]
    struct Fixture {
        ps: usize,
        ds_candidates: usize,
        ds_accepted: usize,
        elite: usize,
    }
    let fixture: Fixture =
        serde_json::from_str(include_str!("fixtures/label_oracle_20x20.json")).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "mixed.json",
        &format!(
            r#"{{"height": 20, "width": 20, "epochs": 12, "seed": 5, "region_rows": [{rows}]}}"#,
            rows = (0..20)
                .map(|r| if r < 10 {
                    "\"PPPPPDDDDDXXXXXWWWWW\""
                } else {
                    "\"DDDDDPPPPPWWWWWXXXXX\""
                })
                .collect::<Vec<_>>()
                .join(",")
        ),
    );
    let prefix = dir.path().join("scene");
    assert_exit(&run(&["synth", "--spec", &path_str(&spec), "--out", &path_str(&prefix)]), 0);

    let mask_out = dir.path().join("labels.mask");
    let r = run(&[
        "label",
        "--stack",
        &path_str(&dir.path().join("scene.tsstack")),
        "--out",
        &path_str(&mask_out),
    ]);
    assert_exit(&r, 0);
    let text = stdout(&r);
    assert!(text.contains(&format!("PS candidates: {}", fixture.ps)), "stdout: {text}");
    assert!(
        text.contains(&format!(
            "DS candidates: {} (accepted: {})",
            fixture.ds_candidates, fixture.ds_accepted
        )),
        "stdout: {text}"
    );
    assert!(text.contains(&format!("elite pixels: {}", fixture.elite)), "stdout: {text}");
    assert_eq!(read_mask(&mask_out).unwrap().elite_count(), fixture.elite);
}

/// Covers the whole train → predict path: smoke run, checkpoint
/// determinism, threshold edge cases, and the transfer shape check.
#[test]
fn train_then_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "scene.json",
        r#"{
            "height": 120, "width": 120, "epochs": 26, "seed": 21,
            "default_class": "water",
            "rects": [
                {"class": "ps", "row": 0, "col": 0, "height": 120, "width": 40},
                {"class": "ds", "row": 0, "col": 40, "height": 120, "width": 40}
            ],
            "deformation_rate": 0.05
        }"#,
    );
    let prefix = dir.path().join("scene");
    assert_exit(&run(&["synth", "--spec", &path_str(&spec), "--out", &path_str(&prefix)]), 0);
    let stack = dir.path().join("scene.tsstack");

    let labels = dir.path().join("labels.mask");
    assert_exit(
        &run(&["label", "--stack", &path_str(&stack), "--out", &path_str(&labels)]),
        0,
    );

    let config = write_spec(
        dir.path(),
        "train.json",
        r#"{
            "learning_rate": 0.01, "decay": 0.00001, "max_epochs": 2, "patience": 5,
            "dropout": 0.25, "batch_size": 2, "seed": 3,
            "sample_epochs": 25, "encoding": "phase_cos_sin", "hidden": 4, "kernel_size": 3
        }"#,
    );

    let ckpt_a = dir.path().join("model_a.ckpt");
    let r = run(&[
        "train",
        "--scene",
        &path_str(&stack),
        &path_str(&labels),
        "--config",
        &path_str(&config),
        "--out",
        &path_str(&ckpt_a),
    ]);
    assert_exit(&r, 0);
    assert!(ckpt_a.exists());
    let history = dir.path().join("model_a.ckpt.history.csv");
    assert!(history.exists());
    let csv = std::fs::read_to_string(&history).unwrap();
    assert!(csv.starts_with("epoch,train_loss,val_loss,val_f1\n"));
    assert_eq!(csv.lines().count(), 3, "expected header + 2 epochs:\n{csv}");

    // Fixed-seed rerun produces an identical checkpoint.
    let ckpt_b = dir.path().join("model_b.ckpt");
    assert_exit(
        &run(&[
            "train",
            "--scene",
            &path_str(&stack),
            &path_str(&labels),
            "--config",
            &path_str(&config),
            "--out",
            &path_str(&ckpt_b),
        ]),
        0,
    );
    assert_eq!(std::fs::read(&ckpt_a).unwrap(), std::fs::read(&ckpt_b).unwrap());

    // Predict at the threshold edges and the default.
    let pred = dir.path().join("pred.mask");
    let r = run(&[
        "predict",
        "--stack",
        &path_str(&stack),
        "--checkpoint",
        &path_str(&ckpt_a),
        "--out",
        &path_str(&pred),
        "--threshold",
        "0.0",
    ]);
    assert_exit(&r, 0);
    assert!(stdout(&r).contains("prediction time"));
    let mask = read_mask(&pred).unwrap();
    assert_eq!((mask.height, mask.width), (120, 120));
    assert_eq!(mask.elite_count(), 120 * 120, "sigmoid outputs exceed a zero threshold");

    let r = run(&[
        "predict",
        "--stack",
        &path_str(&stack),
        "--checkpoint",
        &path_str(&ckpt_a),
        "--out",
        &path_str(&pred),
        "--threshold",
        "1.0",
    ]);
    assert_exit(&r, 0);
    assert_eq!(read_mask(&pred).unwrap().elite_count(), 0, "sigmoid outputs stay under one");

    assert_exit(
        &run(&[
            "predict",
            "--stack",
            &path_str(&stack),
            "--checkpoint",
            &path_str(&ckpt_a),
            "--out",
            &path_str(&pred),
        ]),
        0,
    );
    assert_eq!(read_mask(&pred).unwrap().height, 120);

    // Transfer with a mismatched feature count is a clear shape error.
    let config3 = write_spec(
        dir.path(),
        "train3.json",
        r#"{
            "learning_rate": 0.01, "max_epochs": 1, "batch_size": 2, "seed": 3,
            "sample_epochs": 25, "encoding": "phase_cos_sin_amplitude", "hidden": 4
        }"#,
    );
    let r = run(&[
        "train",
        "--scene",
        &path_str(&stack),
        &path_str(&labels),
        "--config",
        &path_str(&config3),
        "--out",
        &path_str(&dir.path().join("model_c.ckpt")),
        "--transfer-from",
        &path_str(&ckpt_a),
    ]);
    assert_exit(&r, 1);
    assert!(
        String::from_utf8_lossy(&r.stderr).contains("feature planes"),
        "stderr: {}",
        String::from_utf8_lossy(&r.stderr)
    );
}

/// The three-plane encoding (phase cos/sin + normalized amplitude) wired
/// through train and predict.
#[test]
fn amplitude_encoding_trains_and_predicts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "scene.json",
        r#"{
            "height": 110, "width": 110, "epochs": 25, "seed": 8,
            "default_class": "decorrelated",
            "rects": [{"class": "ps", "row": 0, "col": 0, "height": 110, "width": 55}]
        }"#,
    );
    let prefix = dir.path().join("scene");
    assert_exit(&run(&["synth", "--spec", &path_str(&spec), "--out", &path_str(&prefix)]), 0);
    let stack = dir.path().join("scene.tsstack");
    let labels = dir.path().join("labels.mask");
    assert_exit(
        &run(&["label", "--stack", &path_str(&stack), "--out", &path_str(&labels)]),
        0,
    );

    let config = write_spec(
        dir.path(),
        "train.json",
        r#"{
            "learning_rate": 0.01, "max_epochs": 1, "batch_size": 2, "seed": 2,
            "sample_epochs": 25, "encoding": "phase_cos_sin_amplitude", "hidden": 4
        }"#,
    );
    let ckpt = dir.path().join("model.ckpt");
    assert_exit(
        &run(&[
            "train",
            "--scene",
            &path_str(&stack),
            &path_str(&labels),
            "--config",
            &path_str(&config),
            "--out",
            &path_str(&ckpt),
        ]),
        0,
    );

    let pred = dir.path().join("pred.mask");
    assert_exit(
        &run(&[
            "predict",
            "--stack",
            &path_str(&stack),
            "--checkpoint",
            &path_str(&ckpt),
            "--out",
            &path_str(&pred),
        ]),
        0,
    );
    assert_eq!(read_mask(&pred).unwrap().width, 110);
}

#[test]
fn evaluate_reports_identity_and_swap_symmetry() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = EliteMask::blank(20, 20);
    for i in 0..150 {
        a.elite[i] = true;
    }
    let mut b = EliteMask::blank(20, 20);
    for i in 100..320 {
        b.elite[i] = true;
    }
    let pa = dir.path().join("a.mask");
    let pb = dir.path().join("b.mask");
    write_mask(&a, &pa).unwrap();
    write_mask(&b, &pb).unwrap();

    // Identical masks score accuracy 100.00.
    let report = dir.path().join("same.json");
    let r = run(&[
        "evaluate",
        "--pred",
        &path_str(&pa),
        "--truth",
        &path_str(&pa),
        "--out",
        &path_str(&report),
    ]);
    assert_exit(&r, 0);
    assert!(stdout(&r).contains("accuracy 100.00"));
    assert!(report.exists());
    assert!(dir.path().join("same.csv").exists());

    // Swapping prediction and truth swaps precision and recall.
    let r_ab = dir.path().join("ab.json");
    let r_ba = dir.path().join("ba.json");
    assert_exit(
        &run(&["evaluate", "--pred", &path_str(&pa), "--truth", &path_str(&pb), "--out", &path_str(&r_ab)]),
        0,
    );
    assert_exit(
        &run(&["evaluate", "--pred", &path_str(&pb), "--truth", &path_str(&pa), "--out", &path_str(&r_ba)]),
        0,
    );
    let ab: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&r_ab).unwrap()).unwrap();
    let ba: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&r_ba).unwrap()).unwrap();
    assert_eq!(ab["scores"]["precision"], ba["scores"]["recall"]);
    assert_eq!(ab["scores"]["recall"], ba["scores"]["precision"]);
    assert_eq!(ab["scores"]["accuracy"], ba["scores"]["accuracy"]);
}

/// The reference confusion matrix, pushed through the whole evaluate path
/// as a pair of synthetic masks laid out flat.
#[test]
fn evaluate_reproduces_reference_row_from_masks() {
    let (tp, fp, fn_, tn) = (893_961usize, 208_560usize, 58_896usize, 13_913_433usize);
    let total = tp + fp + fn_ + tn;
    let mut pred = EliteMask::blank(1, total);
    let mut truth = EliteMask::blank(1, total);
    // Segments: [tp | fp | fn | tn].
    for i in 0..tp {
        pred.elite[i] = true;
        truth.elite[i] = true;
    }
    for i in tp..tp + fp {
        pred.elite[i] = true;
    }
    for i in tp + fp..tp + fp + fn_ {
        truth.elite[i] = true;
    }

    let dir = tempfile::tempdir().unwrap();
    let pp = dir.path().join("pred.mask");
    let pt = dir.path().join("truth.mask");
    write_mask(&pred, &pp).unwrap();
    write_mask(&truth, &pt).unwrap();
    let report = dir.path().join("report.json");
    let r = run(&[
        "evaluate",
        "--pred",
        &path_str(&pp),
        "--truth",
        &path_str(&pt),
        "--out",
        &path_str(&report),
    ]);
    assert_exit(&r, 0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["scores"]["accuracy"], 98.22);
    assert_eq!(json["scores"]["precision"], 81.08);
    assert_eq!(json["scores"]["recall"], 93.81);
    assert_eq!(json["scores"]["f1"], 86.98);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.contains("accuracy,98.22"));
}
