// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qkprobe(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkprobe"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn qkprobe")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = qkprobe(args, dir);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn planted_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&["gen", "--family", "pronto", "--n-calibration", "80", "--n-evaluation", "60", "--seed", "5", "--out", "data"], dir);
    assert!(dir.join("data").is_dir());
    ok(&["plant", "--planted", "1,3", "--seed", "5", "--out", "model"], dir);
    let cap = ok(&["capture", "--model", "model", "--dataset", "data", "--template", "marker", "--out", "caps.qkc"], dir);
    assert!(cap.contains("wrote 140 captures"), "{cap}");

    let cal = ok(&["calibrate", "--dataset", "data", "--captures", "caps.qkc", "--out", "cal"], dir);
    assert!(cal.starts_with("best head (1, 3) (1.0000)"), "{cal}");
    let tsv = fs::read_to_string(dir.join("cal/calibration.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 1 + 8);

    ok(&["ingest", "--captures", "caps.qkc", "--dataset", "data", "--out", "aligned.qkc"], dir);
    let md = ok(&["eval", "--dataset", "data", "--captures", "aligned.qkc", "--name", "planted", "--out", "run"], dir);
    assert!(md.contains("**1.0000**"), "{md}");
    let paths = ok(&["report", "run/report.json", "--format", "csv,markdown", "--out", "rendered"], dir);
    assert_eq!(paths.lines().count(), 2, "{paths}");
    let csv = fs::read_to_string(dir.join("rendered/report.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("planted,") && l.contains(",QK,")), "{csv}");
}

#[test]
fn rejects_bad_arguments() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = qkprobe(&["report", "missing.json", "--format", "pdf", "--out", "x"], dir);
    assert!(!out.status.success());
    let out = qkprobe(&["calibrate", "--dataset", "d", "--model", "m", "--captures", "c", "--out", "x"], dir);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot be used with"));
    let out = qkprobe(&["gen", "--family", "pronto", "--distractors", "x-2", "--out", "d"], dir);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad count"));
}
