#![allow(clippy::needless_range_loop)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hgrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgrl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, variant: &str, extra: &str) -> PathBuf {
    let path = dir.join(format!("{variant}.toml"));
    std::fs::write(
        &path,
        format!(
            "variant = \"{variant}\"\nseed = 3\n\
             [features]\nsample_rate = 16000\nn_mels = 16\n\
             [encoder]\nchannels = [2, 2, 2, 2]\nembed_dim = 4\nnode_dim = 3\n\
             [train]\nepochs = 2\nbatch_size = 8\n\
             [data.synth]\nn_clips = 24\nduration_secs = 0.6\nsample_rate = 16000\n{extra}"
        ),
    )
    .unwrap();
    path
}

/// Trains a small model and returns its output directory.
fn trained(dir: &Path, variant: &str) -> PathBuf {
    let cfg = write_config(dir, variant, "");
    let out = dir.join(format!("run-{variant}"));
    let o = hgrl(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn train_writes_snapshot_log_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path(), "fcAR-SL");
    for f in ["model.hgw", "log.jsonl", "config.snapshot"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let log = std::fs::read_to_string(out.join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["train"]["total"].is_number());
    }
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fAR", "");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("[train]\n", "[train]\nlearning_rte = 0.1\n");
    std::fs::write(&cfg, text).unwrap();
    let o = hgrl(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rte"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(hgrl(&["train"]).status.code(), Some(2));
    assert_eq!(hgrl(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        hgrl(&["describe", "--variant", "gcn"]).status.code(),
        Some(2)
    );
}

#[test]
fn evaluate_far_reports_missing_coarse_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path(), "fAR");
    let o = hgrl(&["evaluate", "--checkpoint", s(&out.join("model.hgw"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(
        text.contains("24 fAE Acc") && text.contains("N/A"),
        "{text}"
    );

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics_test.json")).unwrap())
            .unwrap();
    for key in ["variant", "split", "n_clips", "loss", "metrics"] {
        assert!(json.get(key).is_some(), "report lacks {key}");
    }
    assert_eq!(json["variant"], "fAR");
    assert!(json["metrics"]["cae"].is_null());

    let o = hgrl(&["analyze", "--checkpoint", s(&out.join("model.hgw"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("analysis requires cAE nodes"));
    let o = hgrl(&[
        "analyze",
        "--checkpoint",
        s(&out.join("model.hgw")),
        "--allow-far",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(out.join("pcc.csv"))
            .unwrap()
            .lines()
            .count(),
        26
    );
}

#[test]
fn evaluate_rejects_a_config_for_another_variant() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path(), "fAR");
    let other = write_config(dir.path(), "fcAR-UL", "");
    let o = hgrl(&[
        "evaluate",
        "--checkpoint",
        s(&out.join("model.hgw")),
        "--config",
        s(&other),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checkpoint/config mismatch"));
}

#[test]
fn analyze_writes_symmetric_matrix_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path(), "fcAR-SL");
    let o = hgrl(&["analyze", "--checkpoint", s(&out.join("model.hgw"))]);
    assert!(o.status.success(), "{}", stderr(&o));

    let csv = std::fs::read_to_string(out.join("pcc.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 33);
    assert_eq!(lines[0].split(',').count(), 32);
    let m: Vec<Vec<f64>> = lines[1..]
        .iter()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    for i in 0..32 {
        for j in 0..32 {
            assert!((m[i][j] - m[j][i]).abs() < 1e-12);
        }
    }

    let svg = std::fs::read_to_string(out.join("heatmap.svg")).unwrap();
    let cells: Vec<&str> = svg
        .lines()
        .filter(|l| l.contains(r#"class="cell""#))
        .collect();
    assert_eq!(cells.len(), 32 * 32);
    for i in 0..32 {
        if m[i][i] == 1.0 {
            let tag = format!(r#"data-row="{i}" data-col="{i}""#);
            let cell = cells.iter().find(|c| c.contains(&tag)).unwrap();
            assert!(cell.contains(r##"fill="#b2182b""##), "{cell}");
        }
    }
}

#[test]
fn gradcheck_lists_every_op_and_flags_the_fixture() {
    let o = hgrl(&["gradcheck"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    for op in hgrl::gradcheck::OPS {
        let rows = text
            .lines()
            .filter(|l| l.split_whitespace().next() == Some(op))
            .count();
        assert_eq!(rows, 1, "{op} listed {rows} times");
    }
    let o = hgrl(&["gradcheck", "--with-faulty-fixture"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stdout(&o)
        .lines()
        .any(|l| l.starts_with(hgrl::gradcheck::FAULTY) && l.ends_with("FAIL")));
}

#[test]
fn weights_survive_export_and_import() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fcAR-UL", "");
    let (a, b, c) = (
        dir.path().join("a.hgw"),
        dir.path().join("b.hgw"),
        dir.path().join("c.hgw"),
    );
    assert!(
        hgrl(&["export-weights", "--config", s(&cfg), "--out", s(&a)])
            .status
            .success()
    );
    let o = hgrl(&[
        "import-weights",
        "--config",
        s(&cfg),
        "--weights",
        s(&a),
        "--out",
        s(&b),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(hgrl(&[
        "export-weights",
        "--config",
        s(&cfg),
        "--checkpoint",
        s(&b),
        "--out",
        s(&c)
    ])
    .status
    .success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn partial_import_keeps_heads_at_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path(), "fcAR-SL");
    let cfg = write_config(dir.path(), "fAR", "");
    let conv = dir.path().join("conv.hgw");
    let o = hgrl(&[
        "export-weights",
        "--config",
        s(&out.join("config.snapshot")),
        "--checkpoint",
        s(&out.join("model.hgw")),
        "--out",
        s(&conv),
        "--conv-only",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let merged = dir.path().join("merged.hgw");
    let o = hgrl(&[
        "import-weights",
        "--config",
        s(&cfg),
        "--weights",
        s(&conv),
        "--out",
        s(&merged),
    ]);
    assert_eq!(o.status.code(), Some(2), "full import needs every entry");
    assert!(
        stderr(&o).contains("checkpoint/config mismatch"),
        "{}",
        stderr(&o)
    );
    let o = hgrl(&[
        "import-weights",
        "--config",
        s(&cfg),
        "--weights",
        s(&conv),
        "--out",
        s(&merged),
        "--allow-partial",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let init = dir.path().join("init.hgw");
    assert!(
        hgrl(&["export-weights", "--config", s(&cfg), "--out", s(&init)])
            .status
            .success()
    );
    let trained_conv = hgrl::weights::read_file(&conv).unwrap();
    let fresh = hgrl::weights::read_file(&init).unwrap();
    let merged = hgrl::weights::read_file(&merged).unwrap();
    assert_eq!(merged.len(), fresh.len());
    for ((name, got), (_, init)) in merged.iter().zip(&fresh) {
        match trained_conv.iter().find(|(n, _)| n == name) {
            Some((_, t)) => assert_eq!(got, t, "{name}"),
            None => assert_eq!(got, init, "{name}"),
        }
    }
    assert!(trained_conv
        .iter()
        .any(|(n, t)| fresh.iter().any(|(m, f)| m == n && f != t)));
}

#[test]
fn corrupt_weights_report_offset_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fAR", "");
    let bad = dir.path().join("bad.hgw");
    std::fs::write(&bad, b"XXXXXX\0\0\0\0").unwrap();
    let o = hgrl(&[
        "import-weights",
        "--config",
        s(&cfg),
        "--weights",
        s(&bad),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("offset 0"), "{}", stderr(&o));
}

#[test]
fn describe_dumps_the_graph() {
    let o = hgrl(&[
        "describe",
        "--variant",
        "fcAR-SL",
        "--n-mels",
        "16",
        "--dump-graph",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let g: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(g["nodes"].as_array().unwrap().len(), 32);
    assert!(!g["edges"].as_array().unwrap().is_empty());

    let o = hgrl(&["describe", "--variant", "fAR", "--n-mels", "16"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!stdout(&o).is_empty());
}

#[test]
fn synth_data_writes_manifest_and_audio() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let o = hgrl(&[
        "synth-data",
        "--out",
        s(&out),
        "--n-clips",
        "8",
        "--duration",
        "0.25",
        "--sample-rate",
        "8000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let wavs = std::fs::read_dir(out.join("audio"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "wav")
        })
        .count();
    assert_eq!(wavs, 8);
    assert_eq!(
        hgrl(&["synth-data", "--out", s(&out), "--n-clips", "2"])
            .status
            .code(),
        Some(2)
    );
}
