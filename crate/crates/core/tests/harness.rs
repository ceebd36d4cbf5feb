// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use std::collections::BTreeSet;
use std::fs;

use qkprobe::datagen::{generate, write_dataset, CountRange, Family, GenConfig, RuleMode};
use qkprobe::harness::report::{render_heatmap, render_markdown};
use qkprobe::harness::{
    build_planted_model, capture_split, emit_report, ingest_captures, planted_spec, run_experiment, run_with_backend,
    split_tables, Backend, DatasetSource, ExperimentConfig, HarnessError, HeadSelection, ReportFormat, BASELINE, BEST,
};
use qkprobe::runtime::{save_model, write_capture, CaptureSet, HeadId, Model, Variant};

use common::{descriptor, fixture_report};

fn pronto(seed: u64, n_cal: usize, n_eval: usize) -> GenConfig {
    let mut c = GenConfig::new(Family::Pronto);
    c.rule_mode = RuleMode::MpOnly;
    c.hops = CountRange::exactly(1);
    c.n_calibration = n_cal;
    c.n_evaluation = n_eval;
    c.seed = seed;
    c
}

fn planted_config(datasets: Vec<GenConfig>, heads: HeadSelection) -> ExperimentConfig {
    let mut config =
        ExperimentConfig::new("planted", datasets.into_iter().map(DatasetSource::Generate).collect(), heads);
    config.template = "marker".into();
    config
}

fn small_planted(planted: HeadId, seed: u64) -> Model {
    build_planted_model(&planted_spec(2, 4, 8), planted, seed).unwrap()
}

#[test]
fn planted_head_is_recovered() {
    let planted = HeadId::new(1, 2);
    let model = small_planted(planted, 7);
    let config = planted_config(vec![pronto(3, 600, 1000)], HeadSelection::Best);
    let report = run_with_backend(&config, Backend::Model(&model)).unwrap();
    let name = &report.setups[0].setup.name;
    let cal = &report.calibration[0];
    assert_eq!(cal.best_head, planted);
    assert_eq!(cal.heads[0].accuracy, 1.0);
    let qk = report.cell(name, BEST).unwrap();
    assert_eq!((qk.head, qk.correct, qk.total), (Some(planted), 1000, 1000));
    let base = report.cell(name, BASELINE).unwrap();
    assert!((0.45..=0.55).contains(&base.accuracy), "baseline {}", base.accuracy);
    for h in cal.heads.iter().filter(|h| h.head != planted) {
        assert!((0.4..=0.6).contains(&h.accuracy), "{} at {}", h.head, h.accuracy);
    }
}

#[test]
fn planted_head_under_gqa_and_post_rotation() {
    let mut spec = planted_spec(2, 4, 8);
    spec.n_kv_heads = 2;
    let planted = HeadId::new(0, 1);
    let model = build_planted_model(&spec, planted, 11).unwrap();
    for variant in [Variant::PrePositional, Variant::PostPositional] {
        let mut config = planted_config(vec![pronto(5, 400, 200)], HeadSelection::Best);
        config.variant = variant;
        let report = run_with_backend(&config, Backend::Model(&model)).unwrap();
        assert_eq!(report.calibration[0].best_head, planted, "{variant}");
        let qk = report.cell(&report.setups[0].setup.name, BEST).unwrap();
        assert_eq!(qk.accuracy, 1.0, "{variant}");
    }
}

#[test]
fn planted_model_limits() {
    assert!(matches!(
        build_planted_model(&planted_spec(5, 4, 8), HeadId::new(0, 0), 0),
        Err(HarnessError::SpecTooLarge(_))
    ));
    assert!(matches!(
        build_planted_model(&planted_spec(2, 9, 8), HeadId::new(0, 0), 0),
        Err(HarnessError::SpecTooLarge(_))
    ));
    assert!(matches!(
        build_planted_model(&planted_spec(2, 4, 8), HeadId::new(2, 0), 0),
        Err(HarnessError::Config(_))
    ));
}

fn small_captures(model: &Model, seed: u64) -> (qkprobe::datagen::DatasetSplit, CaptureSet) {
    let split = generate(&pronto(seed, 40, 20)).unwrap();
    let captures = capture_split(model, &split, "marker", false).unwrap();
    (split, CaptureSet { spec: model.spec.clone(), captures })
}

#[test]
fn ingest_is_keyed_by_sample_id() {
    let model = small_planted(HeadId::new(0, 3), 1);
    let (split, set) = small_captures(&model, 2);
    let in_process = split_tables(&set, &split, Variant::PrePositional).unwrap();

    let mut shuffled = set.clone();
    shuffled.captures.reverse();
    shuffled.captures.swap(0, 7);
    let aligned = ingest_captures(&shuffled, &split, Some(&model.spec.digest())).unwrap();
    let again = split_tables(&CaptureSet { spec: set.spec.clone(), captures: aligned }, &split, Variant::PrePositional)
        .unwrap();
    assert_eq!(again.all, in_process.all);

    let mut gap = set.clone();
    let dropped = gap.captures.remove(13).sample_id;
    match ingest_captures(&gap, &split, None) {
        Err(HarnessError::IdMismatch(id)) => assert_eq!(id, dropped),
        other => panic!("expected IdMismatch, got {:?}", other.map(|c| c.len())),
    }

    assert!(matches!(ingest_captures(&set, &split, Some("feedface")), Err(HarnessError::DigestMismatch { .. })));
}

#[test]
fn calibration_and_evaluation_never_mix() {
    let model = small_planted(HeadId::new(1, 0), 4);
    let (split, set) = small_captures(&model, 9);
    let t = split_tables(&set, &split, Variant::PrePositional).unwrap();
    let cal: BTreeSet<_> = t.calibration.sample_ids.iter().collect();
    let eval: BTreeSet<_> = t.evaluation.sample_ids.iter().collect();
    assert!(cal.is_disjoint(&eval));
    assert_eq!((cal.len(), eval.len()), (40, 20));
    assert_eq!(cal.len() + eval.len(), t.all.len());
    let expected: BTreeSet<_> = split.evaluation.iter().map(|s| &s.id).collect();
    assert_eq!(eval, expected);
}

fn write_fixture(dir: &std::path::Path, seed: u64) -> (std::path::PathBuf, std::path::PathBuf) {
    let model = small_planted(HeadId::new(1, 1), seed);
    let model_path = dir.join("model");
    save_model(&model, &model_path).unwrap();
    let data_path = dir.join("data");
    write_dataset(&data_path, &generate(&pronto(seed, 40, 20)).unwrap()).unwrap();
    (model_path, data_path)
}

#[test]
fn capture_round_trip_reproduces_report() {
    let dir = tempfile::tempdir().unwrap();
    let (model_path, data_path) = write_fixture(dir.path(), 21);
    let mut config =
        ExperimentConfig::new("toy", vec![DatasetSource::Path(data_path.clone())], HeadSelection::Best);
    config.template = "marker".into();
    config.model_path = Some(model_path);
    config.output_dir = Some(dir.path().join("live"));
    config.save_captures = true;
    let live = run_experiment(&config).unwrap();

    let mut replay = config.clone();
    replay.model_path = None;
    replay.capture_path = Some(dir.path().join("live/captures.qkc"));
    replay.spec_digest = Some(live.meta.spec_digest.clone());
    replay.output_dir = Some(dir.path().join("replay"));
    replay.save_captures = false;
    let replayed = run_experiment(&replay).unwrap();
    assert_eq!(replayed, live);
    for f in ["report.json", "report.md", "report.csv"] {
        assert_eq!(
            fs::read(dir.path().join("live").join(f)).unwrap(),
            fs::read(dir.path().join("replay").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn runs_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (model_path, data_path) = write_fixture(dir.path(), 5);
    let mut config = ExperimentConfig::new(
        "toy",
        vec![DatasetSource::Path(data_path), DatasetSource::Generate(GenConfig { hops: CountRange::exactly(2), ..pronto(6, 40, 20) })],
        HeadSelection::Cover { k: 3, from: vec![], manual: None },
    );
    config.model_path = Some(model_path);
    for run in ["a", "b"] {
        config.output_dir = Some(dir.path().join(run));
        run_experiment(&config).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        // run.json holds timings; config.json names the output directory.
        .filter(|n| n != "run.json" && n != "config.json")
        .collect();
    names.sort();
    let svgs = names.iter().filter(|n| n.to_string_lossy().ends_with(".svg")).count();
    assert_eq!(svgs, 2);
    for n in names.iter().filter(|n| dir.path().join("a").join(n).is_file()) {
        assert_eq!(fs::read(dir.path().join("a").join(n)).unwrap(), fs::read(dir.path().join("b").join(n)).unwrap());
    }
    let report = qkprobe::harness::read_report(&dir.path().join("a/report.json")).unwrap();
    assert_eq!(report.cover.as_ref().unwrap().heads.len(), 3);
    assert_eq!(report.sources.len(), 4);
}

#[test]
fn config_needs_exactly_one_backend() {
    let dir = tempfile::tempdir().unwrap();
    let (model_path, data_path) = write_fixture(dir.path(), 2);
    let mut config = ExperimentConfig::new("x", vec![DatasetSource::Path(data_path)], HeadSelection::Best);
    assert!(matches!(config.validate(), Err(HarnessError::Config(_))));
    config.model_path = Some(model_path.clone());
    config.validate().unwrap();
    config.capture_path = Some(model_path);
    assert!(matches!(config.validate(), Err(HarnessError::Config(_))));
    config.capture_path = None;
    config.model_path = Some(dir.path().join("missing"));
    assert!(matches!(config.validate(), Err(HarnessError::Config(_))));
}

#[test]
fn config_json_round_trip() {
    let mut config = planted_config(vec![pronto(1, 400, 200)], HeadSelection::Explicit { heads: vec![HeadId::new(1, 2)] });
    config.variant = Variant::PostPositional;
    let text = serde_json::to_string(&config).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, config);
    let minimal: ExperimentConfig =
        serde_json::from_str(r#"{"name":"m","datasets":[{"path":"d"}],"heads":{"mode":"cover"}}"#).unwrap();
    assert_eq!(minimal.heads, HeadSelection::Cover { k: 5, from: vec![], manual: None });
    assert_eq!(minimal.template, "default");
}

fn table1_fixture() -> qkprobe::harness::EvalReport {
    let h = |l, h| Some(HeadId::new(l, h));
    fixture_report(
        "toy-1b",
        &[
            (descriptor(Family::Pronto, "mp_only", 1, 0), vec![("(2, 3)", h(2, 3), 910), ("(1, 0)", h(1, 0), 700), (BASELINE, None, 650)]),
            (descriptor(Family::Pararule, "mp_only", 5, 0), vec![("(2, 3)", h(2, 3), 600), ("(1, 0)", h(1, 0), 820), (BASELINE, None, 640)]),
            (descriptor(Family::Mle, "scheme", 2, 0), vec![("(2, 3)", h(2, 3), 500), ("(1, 0)", h(1, 0), 450), (BASELINE, None, 700)]),
        ],
    )
}

#[test]
fn markdown_marks_best_and_above_baseline() {
    let md = render_markdown(&[table1_fixture()]);
    let expected = "\
| Model | Source | pronto mp_only d1 | pararule mp_only d5 | mle scheme d2 |
|---|---|---:|---:|---:|
| toy-1b | (2, 3) | **0.9100** | 0.6000 | 0.5000 |
|  | (1, 0) | <u>0.7000</u> | **0.8200** | 0.4500 |
|  | Baseline | 0.6500 | 0.6400 | **0.7000** |
";
    assert_eq!(md, expected);
}

#[test]
fn heatmap_has_one_cell_per_head() {
    let report = table1_fixture();
    for cal in &report.calibration {
        let svg = render_heatmap(cal);
        assert_eq!(svg.matches("class=\"cell\"").count(), cal.n_layers * cal.n_heads);
        assert_eq!(svg, render_heatmap(cal));
        assert!(svg.contains("stroke=\"black\""));
    }
}

#[test]
fn emit_report_formats() {
    let dir = tempfile::tempdir().unwrap();
    let formats: BTreeSet<ReportFormat> =
        ["csv", "md", "svg"].iter().map(|f| f.parse().unwrap()).collect();
    let written = emit_report(&[table1_fixture()], &formats, dir.path()).unwrap();
    assert_eq!(written.len(), 2 + 3);
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9);
    assert!(csv.contains("\ntoy-1b,pronto/mp_only/d1/x0,pronto,mp_only,1,0,\"(2, 3)\",2,3,910,1000,0.9100\n"));
    assert!(matches!("pdf".parse::<ReportFormat>(), Err(HarnessError::UnsupportedFormat(_))));

    let mut broken = table1_fixture();
    broken.cells.pop();
    assert!(emit_report(&[broken], &formats, dir.path()).is_err());
}

#[test]
fn write_capture_then_ingest_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_planted(HeadId::new(0, 0), 3);
    let (split, set) = small_captures(&model, 8);
    let data = dir.path().join("d");
    write_dataset(&data, &split).unwrap();
    let cap = dir.path().join("c.qkc");
    write_capture(&set, &cap).unwrap();
    let got = qkprobe::harness::ingest_external_capture(&cap, &data, Some(&model.spec.digest())).unwrap();
    assert_eq!(got, set);
}
