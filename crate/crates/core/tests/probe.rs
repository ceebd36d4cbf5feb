// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qkprobe::calibration::{
    calibrate, head_accuracy, select_best_head, select_cover_heads, CalibrationReport,
};
use qkprobe::datagen::{Answer, Family};
use qkprobe::probe::{decide_logits, decide_scores, dot, qk_scores, score_table, Orientation, ScoreTable};
use qkprobe::runtime::{forward_capture, CaptureSet, HeadId, Positional, Variant};

use common::{descriptor, random_layout, random_model, synthetic_table};

fn answers() -> impl Strategy<Value = Answer> {
    prop_oneof![Just(Answer::A0), Just(Answer::A1)]
}

fn accuracy_count(decisions: &[Answer], gold: &[Answer]) -> usize {
    decisions.iter().zip(gold).filter(|(d, g)| d == g).count()
}

#[test]
fn ties_go_to_a0() {
    for s in [-3.5f32, 0.0, -0.0, 1e-30, 7.25] {
        assert_eq!(decide_scores(s, s, Orientation::Direct), Answer::A0);
        assert_eq!(decide_scores(s, s, Orientation::Reversed), Answer::A1);
        assert_eq!(decide_logits(s, s), Answer::A0);
    }
    assert_eq!(decide_scores(0.0, -0.0, Orientation::Direct), Answer::A0);
    assert_eq!(decide_scores(1.0, 2.0, Orientation::Direct), Answer::A1);
    assert_eq!(decide_scores(2.0, 1.0, Orientation::Direct), Answer::A0);
}

#[test]
fn exhaustive_small_tables_flip_exactly() {
    // Every gold/decision assignment over 4 samples.
    let all: Vec<[Answer; 4]> = (0..16u32)
        .map(|m| std::array::from_fn(|i| if m >> i & 1 == 0 { Answer::A0 } else { Answer::A1 }))
        .collect();
    for gold in &all {
        for dec in &all {
            let scores: Vec<(f32, f32)> =
                dec.iter().map(|d| if *d == Answer::A0 { (1.0, 0.0) } else { (0.0, 1.0) }).collect();
            let direct: Vec<Answer> = scores.iter().map(|&(a, b)| decide_scores(a, b, Orientation::Direct)).collect();
            let rev: Vec<Answer> = scores.iter().map(|&(a, b)| decide_scores(a, b, Orientation::Reversed)).collect();
            assert_eq!(direct, dec.to_vec());
            assert_eq!(accuracy_count(&rev, gold), 4 - accuracy_count(&direct, gold));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn positive_scaling_keeps_decision(s0 in -1e3f32..1e3, s1 in -1e3f32..1e3, c in 1e-3f32..1e3) {
        // Rounding is monotone, so scaling both scores never reorders them.
        prop_assert_eq!(decide_scores(c * s0, c * s1, Orientation::Direct), decide_scores(s0, s1, Orientation::Direct));
    }

    #[test]
    fn scaling_query_vectors_keeps_decision(
        q0 in prop::collection::vec(-2f32..2.0, 8),
        q1 in prop::collection::vec(-2f32..2.0, 8),
        k in prop::collection::vec(-2f32..2.0, 8),
        c in 0.01f32..100.0,
    ) {
        let (s0, s1) = (dot(&q0, &k), dot(&q1, &k));
        prop_assume!((s0 - s1).abs() > 1e-3);
        let scale = |v: &[f32]| v.iter().map(|x| c * x).collect::<Vec<_>>();
        let (t0, t1) = (dot(&scale(&q0), &k), dot(&scale(&q1), &k));
        prop_assert_eq!(decide_scores(t0, t1, Orientation::Direct), decide_scores(s0, s1, Orientation::Direct));
    }

    #[test]
    fn swapping_labels_flips_decision(s0 in -1e3f32..1e3, s1 in -1e3f32..1e3) {
        prop_assume!(s0 != s1);
        let a = decide_scores(s0, s1, Orientation::Direct);
        prop_assert_eq!(decide_scores(s1, s0, Orientation::Direct), a.flipped());
    }

    #[test]
    fn reversed_is_direct_flipped(s0 in -1e3f32..1e3, s1 in -1e3f32..1e3) {
        prop_assert_eq!(decide_scores(s0, s1, Orientation::Reversed), decide_scores(s0, s1, Orientation::Direct).flipped());
    }

    #[test]
    fn baseline_is_two_way_softmax(l0 in -50f32..50.0, l1 in -50f32..50.0) {
        prop_assume!((l0 - l1).abs() > 1e-6);
        let (a, b) = (l0 as f64, l1 as f64);
        let m = a.max(b);
        let p0 = (a - m).exp() / ((a - m).exp() + (b - m).exp());
        let want = if p0 >= 0.5 { Answer::A0 } else { Answer::A1 };
        prop_assert_eq!(decide_logits(l0, l1), want);
    }

    #[test]
    fn flipped_accuracy_is_complement(gold in prop::collection::vec(answers(), 1..64), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<(f32, f32)> = gold.iter().map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let n = gold.len();
        let direct: Vec<Answer> = scores.iter().map(|&(a, b)| decide_scores(a, b, Orientation::Direct)).collect();
        let rev: Vec<Answer> = scores.iter().map(|&(a, b)| decide_scores(a, b, Orientation::Reversed)).collect();
        prop_assert_eq!(accuracy_count(&rev, &gold), n - accuracy_count(&direct, &gold));
    }
}

#[test]
fn pre_and_post_agree_without_positions() {
    for seed in 0..20 {
        let mut model = random_model(seed);
        model.spec.positional = Positional::None;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = random_layout(&mut rng, model.spec.vocab_size);
        let cap = forward_capture(&model, &layout, "s", false, false).unwrap();
        for head in model.spec.heads() {
            let pre = qk_scores(&model.spec, &cap, head, Variant::PrePositional).unwrap();
            let post = qk_scores(&model.spec, &cap, head, Variant::PostPositional).unwrap();
            assert_eq!(pre, post, "seed {seed} head {head}");
        }
    }
}

#[test]
fn score_table_ignores_capture_order() {
    let model = random_model(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let captures: Vec<_> = (0..12)
        .map(|i| forward_capture(&model, &random_layout(&mut rng, model.spec.vocab_size), &format!("s{i:02}"), false, false).unwrap())
        .collect();
    let gold: BTreeMap<String, Answer> =
        (0..12).map(|i| (format!("s{i:02}"), if i % 3 == 0 { Answer::A1 } else { Answer::A0 })).collect();
    let mut set = CaptureSet { spec: model.spec.clone(), captures };
    let a = score_table(&set, &gold, Variant::PrePositional, "d").unwrap();
    set.captures.reverse();
    let b = score_table(&set, &gold, Variant::PrePositional, "d").unwrap();
    assert_eq!(a, b);
    set.captures.pop();
    assert!(score_table(&set, &gold, Variant::PrePositional, "d").is_err());
}

#[test]
fn grid_of_eighty_records() {
    let table = synthetic_table(2, 4, 10, None, 1);
    assert_eq!(table.records().count(), 80);
    let tsv = table.to_tsv();
    assert_eq!(tsv.lines().count(), 81);
    assert!(tsv.starts_with("sample_id\tlayer\thead\ts0\ts1\tgold\tqk_decision\tbaseline_decision\n"));
    let ids: BTreeSet<_> = table.records().map(|r| r.sample_id).collect();
    assert_eq!(ids.len(), 10);
    let per_head = table.records().filter(|r| r.head == HeadId::new(1, 3)).count();
    assert_eq!(per_head, 10);
}

#[test]
fn constant_scores_score_the_a0_share() {
    let mut table = synthetic_table(1, 2, 600, None, 4);
    for row in &mut table.scores {
        row[0] = (0.25, 0.25);
    }
    let acc = head_accuracy(&table).unwrap();
    assert_eq!(acc[&HeadId::new(0, 0)].value(), 0.5);
}

#[test]
fn random_scores_stay_near_chance() {
    // 3 sigma of a binomial(600, 0.5) proportion.
    let bound = 3.0 * (0.25f64 / 600.0).sqrt();
    for seed in 0..10 {
        let table = synthetic_table(2, 4, 600, None, 100 + seed);
        for (h, a) in head_accuracy(&table).unwrap() {
            assert!((a.value() - 0.5).abs() <= bound, "seed {seed} head {h}: {}", a.value());
        }
    }
}

fn report_of(table: &ScoreTable, name: usize) -> CalibrationReport {
    calibrate(table, descriptor(Family::Pronto, "mp_only", name, 0), 10).unwrap()
}

#[test]
fn calibration_is_reproducible_and_ranked() {
    let table = synthetic_table(3, 4, 400, Some(HeadId::new(2, 1)), 9);
    let a = report_of(&table, 1);
    let b = report_of(&table.clone(), 1);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.to_tsv(), b.to_tsv());
    assert_eq!(select_best_head(&a), HeadId::new(2, 1));
    assert_eq!(a.top.len(), 10);
    for w in a.heads.windows(2) {
        assert!(w[0].accuracy > w[1].accuracy || (w[0].accuracy == w[1].accuracy && w[0].head < w[1].head));
    }
    for h in &a.heads {
        assert_eq!(h.flipped_accuracy, 1.0 - h.accuracy);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn best_head_dominates(seed in any::<u64>(), n in 1usize..200) {
        let table = synthetic_table(2, 3, n, None, seed);
        let r = report_of(&table, 1);
        let best = r.accuracy_of(select_best_head(&r)).unwrap();
        for h in &r.heads {
            prop_assert!(best >= h.accuracy);
        }
    }

    #[test]
    fn cover_dominates_single_heads(seed in any::<u64>(), setups in 1usize..8, k in 1usize..5) {
        let reports: Vec<CalibrationReport> =
            (0..setups).map(|i| report_of(&synthetic_table(2, 4, 40, None, seed ^ i as u64), i)).collect();
        let cover = select_cover_heads(&reports, k).unwrap();
        let distinct: BTreeSet<_> = cover.heads.iter().collect();
        prop_assert_eq!(distinct.len(), k);
        for r in &reports {
            for h in &r.top {
                let single = reports.iter().filter(|x| x.top.contains(h)).count();
                prop_assert!(cover.covered() >= single);
            }
        }
        let pool: BTreeSet<HeadId> = reports.iter().flat_map(|r| r.top.iter().copied()).collect();
        prop_assert!(cover.heads.iter().all(|h| pool.contains(h)));
    }
}
