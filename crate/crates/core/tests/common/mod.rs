// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared test helpers: a deliberately naive f64 transformer used as an
//! oracle for the runtime, and random model fixtures.

#![allow(dead_code)]

use qkprobe::runtime::{Ffn, Model, ModelSpec, Norm, Positional, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Reference {
    /// `[layer][head][pos][dim]`
    pub q_pre: Vec<Vec<Vec<Vec<f64>>>>,
    pub q_post: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[layer][kv head][pos][dim]`
    pub k_pre: Vec<Vec<Vec<Vec<f64>>>>,
    pub k_post: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[pos][vocab]`
    pub logits: Vec<Vec<f64>>,
}

fn row(w: &[f32], r: usize, cols: usize) -> Vec<f64> {
    w[r * cols..(r + 1) * cols].iter().map(|&v| v as f64).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn apply(w: &[f32], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows).map(|r| dot(&row(w, r, cols), x)).collect()
}

fn norm(spec: &ModelSpec, weight: &[f32], bias: Option<&Vec<f32>>, x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let eps = spec.norm_eps as f64;
    let mut out = vec![0.0; x.len()];
    if spec.norm == Norm::RmsNorm {
        let mut ss = 0.0;
        for v in x {
            ss += v * v;
        }
        let r = (ss / n + eps).sqrt();
        for i in 0..x.len() {
            out[i] = x[i] / r * weight[i] as f64;
        }
    } else {
        let mean: f64 = x.iter().sum::<f64>() / n;
        let mut var = 0.0;
        for v in x {
            var += (v - mean) * (v - mean);
        }
        let sd = (var / n + eps).sqrt();
        for i in 0..x.len() {
            out[i] = (x[i] - mean) / sd * weight[i] as f64 + bias.map_or(0.0, |b| b[i] as f64);
        }
    }
    out
}

fn rotate(v: &[f64], pos: usize, theta: f64) -> Vec<f64> {
    let d = v.len();
    let mut out = v.to_vec();
    for i in 0..d / 2 {
        let angle = pos as f64 / theta.powf((2 * i) as f64 / d as f64);
        out[i] = v[i] * angle.cos() - v[i + d / 2] * angle.sin();
        out[i + d / 2] = v[i] * angle.sin() + v[i + d / 2] * angle.cos();
    }
    out
}

pub fn reference_forward(model: &Model, ids: &[u32]) -> Reference {
    let s = &model.spec;
    let (d, hd, t) = (s.d_model, s.head_dim, ids.len());
    let mut x: Vec<Vec<f64>> = ids.iter().map(|&id| row(&model.tok_embeddings, id as usize, d)).collect();
    let mut out = Reference { q_pre: vec![], q_post: vec![], k_pre: vec![], k_post: vec![], logits: vec![] };
    for layer in &model.layers {
        let h: Vec<Vec<f64>> =
            x.iter().map(|xi| norm(s, &layer.attn_norm.weight, layer.attn_norm.bias.as_ref(), xi)).collect();
        let q_all: Vec<Vec<f64>> = h.iter().map(|hi| apply(&layer.wq, s.n_heads * hd, d, hi)).collect();
        let k_all: Vec<Vec<f64>> = h.iter().map(|hi| apply(&layer.wk, s.n_kv_heads * hd, d, hi)).collect();
        let v_all: Vec<Vec<f64>> = h.iter().map(|hi| apply(&layer.wv, s.n_kv_heads * hd, d, hi)).collect();
        let split = |all: &Vec<Vec<f64>>, n: usize| -> Vec<Vec<Vec<f64>>> {
            (0..n).map(|head| all.iter().map(|p| p[head * hd..(head + 1) * hd].to_vec()).collect()).collect()
        };
        let (q, k, v) = (split(&q_all, s.n_heads), split(&k_all, s.n_kv_heads), split(&v_all, s.n_kv_heads));
        let rot = |m: &Vec<Vec<Vec<f64>>>| -> Vec<Vec<Vec<f64>>> {
            m.iter()
                .map(|head| {
                    head.iter()
                        .enumerate()
                        .map(|(p, vec)| match s.positional {
                            Positional::Rope { theta } => rotate(vec, p, theta as f64),
                            Positional::None => vec.clone(),
                        })
                        .collect()
                })
                .collect()
        };
        let (qr, kr) = (rot(&q), rot(&k));
        let mut concat = vec![vec![0.0; s.n_heads * hd]; t];
        for head in 0..s.n_heads {
            let g = head / (s.n_heads / s.n_kv_heads);
            for i in 0..t {
                let scores: Vec<f64> = (0..=i).map(|j| dot(&qr[head][i], &kr[g][j]) / (hd as f64).sqrt()).collect();
                let m = scores.iter().cloned().fold(f64::MIN, f64::max);
                let z: f64 = scores.iter().map(|sc| (sc - m).exp()).sum();
                for j in 0..=i {
                    let p = (scores[j] - m).exp() / z;
                    for c in 0..hd {
                        concat[i][head * hd + c] += p * v[g][j][c];
                    }
                }
            }
        }
        for i in 0..t {
            let o = apply(&layer.wo, d, s.n_heads * hd, &concat[i]);
            for c in 0..d {
                x[i][c] += o[c];
            }
        }
        for xi in x.iter_mut() {
            let hi = norm(s, &layer.ffn_norm.weight, layer.ffn_norm.bias.as_ref(), xi);
            let a = apply(&layer.w1, s.d_ff, d, &hi);
            let act: Vec<f64> = match s.ffn {
                Ffn::Gelu => a
                    .iter()
                    .map(|&z| 0.5 * z * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (z + 0.044715 * z.powi(3))).tanh()))
                    .collect(),
                Ffn::Swiglu => {
                    let b = apply(layer.w3.as_ref().unwrap(), s.d_ff, d, &hi);
                    a.iter().zip(&b).map(|(&z, &g)| z / (1.0 + (-z).exp()) * g).collect()
                }
            };
            let o = apply(&layer.w2, d, s.d_ff, &act);
            for (xc, oc) in xi.iter_mut().zip(&o) {
                *xc += oc;
            }
        }
        out.q_pre.push(q);
        out.k_pre.push(k);
        out.q_post.push(qr);
        out.k_post.push(kr);
    }
    let unembed = model.output.as_ref().unwrap_or(&model.tok_embeddings);
    for xi in &x {
        let h = norm(s, &model.norm.weight, model.norm.bias.as_ref(), xi);
        out.logits.push(apply(unembed, s.vocab_size, d, &h));
    }
    out
}

pub fn small_vocab(n: usize) -> Vocab {
    Vocab::new((0..n).map(|i| format!("w{i}")))
}

/// A random architecture within n_layers ≤ 3, n_heads ≤ 4.
pub fn random_spec(rng: &mut ChaCha8Rng, vocab_size: usize) -> ModelSpec {
    let n_heads = rng.gen_range(1..=4);
    let divisors: Vec<usize> = (1..=n_heads).filter(|k| n_heads % k == 0).collect();
    let head_dim = 2 * rng.gen_range(1..=4);
    let mut spec = ModelSpec::toy(rng.gen_range(1..=3), n_heads, head_dim, vocab_size);
    spec.n_kv_heads = divisors[rng.gen_range(0..divisors.len())];
    spec.d_ff = rng.gen_range(4..=24);
    spec.norm = if rng.gen_bool(0.5) { Norm::RmsNorm } else { Norm::LayerNorm };
    spec.ffn = if rng.gen_bool(0.5) { Ffn::Swiglu } else { Ffn::Gelu };
    spec.positional =
        if rng.gen_bool(0.75) { Positional::Rope { theta: [100.0, 10_000.0][rng.gen_range(0..2)] } } else { Positional::None };
    spec.tied_embeddings = rng.gen_bool(0.3);
    spec
}

pub fn random_model(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = small_vocab(rng.gen_range(6..=30));
    let spec = random_spec(&mut rng, vocab.len());
    Model::random(spec, vocab, seed ^ 0x5eed).unwrap()
}

pub fn random_ids(rng: &mut ChaCha8Rng, vocab_size: usize, max_len: usize) -> Vec<u32> {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| rng.gen_range(0..vocab_size as u32)).collect()
}

/// Largest absolute difference between the runtime's instrumented pass and the
/// reference, over logits at the final position and all captured vectors.
/// Random ids with arbitrary option and statement-end positions.
pub fn random_layout(rng: &mut ChaCha8Rng, vocab_size: usize) -> qkprobe::runtime::PromptLayout {
    let ids = random_ids(rng, vocab_size, 16);
    let t = ids.len();
    let pos_s = rng.gen_range(0..t);
    let (pos_a0, pos_a1) = (rng.gen_range(0..t), rng.gen_range(0..t));
    qkprobe::runtime::PromptLayout {
        option_ids: [ids[pos_a0], ids[pos_a1]],
        token_ids: ids,
        pos_a0,
        pos_a1,
        pos_s,
        pos_final: t - 1,
        statement: 0..pos_s,
        template_id: "default".into(),
    }
}

pub fn capture_vs_reference(model: &Model, seed: u64) -> f64 {
    use qkprobe::runtime::{forward_capture, Variant};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = random_layout(&mut rng, model.spec.vocab_size);
    let ids = layout.token_ids.clone();
    let t = ids.len();
    let (pos_a0, pos_a1, pos_s) = (layout.pos_a0, layout.pos_a1, layout.pos_s);
    let cap = forward_capture(model, &layout, "x", false, true).unwrap();
    let r = reference_forward(model, &ids);
    let spec = &model.spec;
    let mut worst: f64 = 0.0;
    let mut cmp = |a: &[f32], b: &[f64]| {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((*x as f64 - y).abs());
        }
    };
    cmp(cap.logits_final.as_ref().unwrap(), &r.logits[t - 1]);
    for l in 0..spec.n_layers {
        for h in 0..spec.n_heads {
            let g = h / spec.group_size();
            let id = qkprobe::runtime::HeadId::new(l, h);
            for (variant, q, k) in
                [(Variant::PrePositional, &r.q_pre, &r.k_pre), (Variant::PostPositional, &r.q_post, &r.k_post)]
            {
                let hv = cap.head(variant, id, spec.n_heads).unwrap();
                cmp(&hv.q_a0, &q[l][h][pos_a0]);
                cmp(&hv.q_a1, &q[l][h][pos_a1]);
                cmp(&hv.k_s, &k[l][g][pos_s]);
            }
        }
    }
    worst
}

// Synthetic score tables and reports.

use qkprobe::calibration::{calibrate, Accuracy, SetupDescriptor};
use qkprobe::datagen::{Answer, Family};
use qkprobe::harness::{EvalCell, EvalReport, RunMeta, SetupSummary, BASELINE};
use qkprobe::probe::ScoreTable;
use qkprobe::runtime::{HeadId, Variant};

/// Balanced gold, random scores; `planted` separates perfectly.
pub fn synthetic_table(n_layers: usize, n_heads: usize, n: usize, planted: Option<HeadId>, seed: u64) -> ScoreTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gold: Vec<Answer> = (0..n).map(|i| if i % 2 == 0 { Answer::A0 } else { Answer::A1 }).collect();
    let scores = gold
        .iter()
        .map(|g| {
            (0..n_layers * n_heads)
                .map(|u| {
                    let (a, b): (f32, f32) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    match planted {
                        Some(p) if p.index(n_heads) == u => {
                            let gap = 0.5 + a.abs();
                            if *g == Answer::A0 { (b + gap, b) } else { (b, b + gap) }
                        }
                        _ => (a, b),
                    }
                })
                .collect()
        })
        .collect();
    ScoreTable {
        n_layers,
        n_heads,
        variant: Variant::PrePositional,
        dataset_digest: format!("digest-{seed}"),
        sample_ids: (0..n).map(|i| format!("s{i:05}")).collect(),
        baseline: (0..n).map(|_| if rng.gen_bool(0.5) { Answer::A0 } else { Answer::A1 }).collect(),
        gold,
        scores,
    }
}

pub fn descriptor(family: Family, rule_mode: &str, depth: usize, distractors: usize) -> SetupDescriptor {
    SetupDescriptor {
        name: format!("{family}/{rule_mode}/d{depth}/x{distractors}"),
        family,
        rule_mode: rule_mode.into(),
        depth: depth.to_string(),
        distractors: distractors.to_string(),
    }
}

/// A report with the given per-setup `(source, correct)` values over 1000
/// evaluation samples; `Baseline` must be among the sources.
pub type Column<'a> = (SetupDescriptor, Vec<(&'a str, Option<HeadId>, usize)>);

pub fn fixture_report(model: &str, columns: &[Column]) -> EvalReport {
    let total = 1000;
    let mut cells = Vec::new();
    let mut calibration = Vec::new();
    let mut sources: Vec<String> = Vec::new();
    for (i, (setup, values)) in columns.iter().enumerate() {
        for (src, head, correct) in values {
            cells.push(EvalCell::new(&setup.name, src, *head, Accuracy { correct: *correct, total }));
            if !sources.iter().any(|s| s == src) {
                sources.push(src.to_string());
            }
        }
        let table = synthetic_table(2, 4, 400, Some(HeadId::new(1, i % 4)), i as u64);
        calibration.push(calibrate(&table, setup.clone(), 10).unwrap());
    }
    sources.retain(|s| s != BASELINE);
    sources.push(BASELINE.into());
    EvalReport {
        model: model.into(),
        variant: Variant::PrePositional,
        heads_mode: "explicit".into(),
        setups: columns
            .iter()
            .map(|(s, _)| SetupSummary {
                setup: s.clone(),
                n_calibration: 400,
                n_evaluation: total,
                dataset_digest: format!("{}-digest", s.name),
            })
            .collect(),
        sources,
        cells,
        calibration,
        cover: None,
        meta: RunMeta { seed: 0, spec_digest: "spec".into(), config_digest: "config".into() },
    }
}
