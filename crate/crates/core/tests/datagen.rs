// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use qkprobe::datagen::{
    add_distractors, certify, gen_multilogieval, gen_pararule, gen_prontoqa, negation_counterpart,
    read_dataset, split_key, write_dataset, Answer, CountRange, DatasetSplit, Family, GenConfig,
    Polarity, RuleMode,
};
use qkprobe::logic::{entails, proof_depth, Formula};

fn pronto(mode: RuleMode, hops: CountRange, n_cal: usize, n_eval: usize) -> GenConfig {
    let mut c = GenConfig::new(Family::Pronto);
    c.rule_mode = mode;
    c.hops = hops;
    c.n_calibration = n_cal;
    c.n_evaluation = n_eval;
    c.seed = 11;
    c
}

fn assert_split_hygiene(split: &DatasetSplit) {
    let a0 = split.calibration.iter().filter(|s| s.gold == Answer::A0).count();
    assert_eq!(a0 * 2, split.calibration.len(), "calibration must be class-balanced");
    let cal_keys: BTreeSet<String> = split.calibration.iter().map(split_key).collect();
    for s in &split.evaluation {
        assert!(!cal_keys.contains(&split_key(s)), "{} crosses the split", s.id);
    }
    let ids: BTreeSet<&str> = split.all().map(|s| s.id.as_str()).collect();
    assert_eq!(ids.len(), split.calibration.len() + split.evaluation.len());
}

#[test]
fn pronto_mp_only_sizes_and_balance() {
    let split = gen_prontoqa(&pronto(RuleMode::MpOnly, CountRange::exactly(1), 600, 1000)).unwrap();
    assert_eq!(split.calibration.len(), 600);
    assert_eq!(split.evaluation.len(), 1000);
    assert_split_hygiene(&split);
    let eval_a0 = split.evaluation.iter().filter(|s| s.gold == Answer::A0).count();
    assert_eq!(eval_a0, 500, "counterpart pairs keep evaluation balanced");
    let positive = split.all().filter(|s| s.polarity == Polarity::Positive).count();
    assert_eq!(positive, 800);
    for s in split.all() {
        assert_eq!(s.context.len(), 2, "one rule and one fact");
    }
}

#[test]
fn counterparts_are_linked_symmetrically() {
    let split = gen_prontoqa(&pronto(RuleMode::Composed, CountRange::new(1, 5), 40, 60)).unwrap();
    let by_id: BTreeMap<&str, _> = split.all().map(|s| (s.id.as_str(), s)).collect();
    for s in split.all() {
        let other = by_id[s.counterpart_id.as_deref().unwrap()];
        assert_eq!(other.counterpart_id.as_deref(), Some(s.id.as_str()));
        assert_eq!(other.gold, s.gold.flipped());
        assert_eq!(other.context, s.context);
        assert_eq!(other.statement.formula, s.statement.formula.negated());
        let flipped = negation_counterpart(s);
        assert_eq!(flipped.statement, other.statement);
        certify(&flipped).unwrap();
    }
}

#[test]
fn recorded_depths_match_independent_recomputation() {
    let split = gen_prontoqa(&pronto(RuleMode::Composed, CountRange::new(1, 5), 50, 50)).unwrap();
    for s in split.all() {
        let d = proof_depth(&s.context_formulas(), &s.statement.formula, Family::Pronto.proof_system());
        assert_eq!(d, Ok(s.depth), "{}", s.id);
    }
}

#[test]
fn pararule_depths_are_exact() {
    for depth in 2..=5 {
        let mut c = GenConfig::new(Family::Pararule);
        c.hops = CountRange::exactly(depth);
        c.n_calibration = 20;
        c.n_evaluation = 30;
        let split = gen_pararule(&c).unwrap();
        assert_split_hygiene(&split);
        assert!(split.all().all(|s| s.depth == depth));
    }
}

#[test]
fn mle_counts_match_requested_totals() {
    for (depth, total) in [(1usize, 1300usize), (2, 700), (3, 900), (4, 700)] {
        let mut c = GenConfig::new(Family::Mle);
        c.rule_mode = RuleMode::Scheme { depth, schemes: Vec::new() };
        c.n_calibration = 600;
        c.n_evaluation = total - 600;
        let split = gen_multilogieval(&c).unwrap();
        assert_eq!(split.calibration.len() + split.evaluation.len(), total);
        assert_split_hygiene(&split);
        let mut per_scheme: BTreeMap<String, [usize; 2]> = BTreeMap::new();
        for s in split.all() {
            per_scheme.entry(s.scheme.clone().unwrap()).or_default()[s.gold.index()] += 1;
        }
        for (scheme, [yes, no]) in per_scheme {
            assert_eq!(yes, no, "{scheme}");
        }
    }
}

#[test]
fn mle_questions_are_yes_no() {
    let mut c = GenConfig::new(Family::Mle);
    c.n_calibration = 12;
    c.n_evaluation = 14;
    let split = gen_multilogieval(&c).unwrap();
    for s in split.all() {
        assert!(s.statement.text.ends_with('?'));
        assert!(s.statement.text.starts_with("Does ") || s.statement.text.starts_with("Is it true that "));
    }
}

#[test]
fn distractors_never_change_the_verdict() {
    let split = gen_prontoqa(&pronto(RuleMode::Composed, CountRange::new(1, 5), 100, 150)).unwrap();
    let samples: Vec<_> = split.all().collect();
    for trial in 0..500usize {
        let s = samples[trial % samples.len()];
        let k = 1 + trial % 5;
        let before = entails(&s.context_formulas(), &s.statement.formula, 3).unwrap();
        let d = add_distractors(s, k, trial as u64).unwrap();
        assert_eq!(d.context.len(), s.context.len() + k);
        assert_eq!(entails(&d.context_formulas(), &d.statement.formula, 3).unwrap(), before);
    }
}

#[test]
fn distractor_config_is_applied() {
    let mut c = pronto(RuleMode::MpOnly, CountRange::exactly(1), 20, 20);
    c.distractors = CountRange::exactly(5);
    let split = gen_prontoqa(&c).unwrap();
    for s in split.all() {
        assert_eq!(s.distractors, 5);
        assert_eq!(s.context.len(), 7);
    }
}

#[test]
fn files_are_byte_identical_across_runs() {
    let c = pronto(RuleMode::Composed, CountRange::new(1, 3), 20, 30);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        write_dataset(d.path(), &gen_prontoqa(&c).unwrap()).unwrap();
    }
    for name in ["calibration.jsonl", "evaluation.jsonl", "manifest.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let back = read_dataset(dirs[0].path()).unwrap();
    assert_eq!(back, gen_prontoqa(&c).unwrap());
}

#[test]
fn formulas_survive_the_file_format() {
    let split = gen_prontoqa(&pronto(RuleMode::Composed, CountRange::new(4, 5), 10, 10)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &split).unwrap();
    let text = std::fs::read_to_string(dir.path().join("calibration.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let f: Formula = first["statement"]["formula"].as_str().unwrap().parse().unwrap();
    assert_eq!(f, split.calibration[0].statement.formula);
}

#[test]
fn bad_configs_are_rejected() {
    let mut c = GenConfig::new(Family::Pronto);
    c.n_calibration = 601;
    assert!(gen_prontoqa(&c).is_err());
    let mut c = GenConfig::new(Family::Pronto);
    c.hops = CountRange::exactly(6);
    assert!(gen_prontoqa(&c).is_err());
    let mut c = GenConfig::new(Family::Pararule);
    c.hops = CountRange::exactly(1);
    assert!(gen_pararule(&c).is_err());
}
