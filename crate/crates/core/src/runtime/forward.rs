// SPDX-License-Identifier: MIT OR Apache-2.0

//! Instrumented forward pass.
//!
//! Pre-norm decoder blocks: `x += attn(norm(x)); x += ffn(norm(x))`, then a
//! final norm and the unembedding. GELU uses the tanh approximation.

use super::capture::{HeadVectors, QKCapture};
use super::model::{Model, NormWeights};
use super::rope;
use super::spec::{Ffn, ModelSpec, Norm, Positional};
use super::tokenizer::PromptLayout;
use super::RuntimeError;

/// Every intermediate a test might want, for one token sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub seq_len: usize,
    /// `[layer][pos * H*hd]`, before rotation.
    pub q_pre: Vec<Vec<f32>>,
    /// `[layer][pos * KV*hd]`, before rotation.
    pub k_pre: Vec<Vec<f32>>,
    pub q_post: Vec<Vec<f32>>,
    pub k_post: Vec<Vec<f32>>,
    /// `[layer][head][query * seq_len + key]`, causal softmax weights.
    pub attention: Vec<Vec<Vec<f32>>>,
    /// `[pos * V]`
    pub logits: Vec<f32>,
}

impl ForwardTrace {
    pub fn logits_at(&self, pos: usize) -> &[f32] {
        let v = self.logits.len() / self.seq_len;
        &self.logits[pos * v..(pos + 1) * v]
    }
}

fn matvec(w: &[f32], rows: usize, cols: usize, x: &[f32], out: &mut [f32]) {
    debug_assert_eq!(w.len(), rows * cols);
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        let row = &w[r * cols..(r + 1) * cols];
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

fn normalize(spec: &ModelSpec, n: &NormWeights, x: &[f32]) -> Vec<f32> {
    let d = x.len() as f32;
    match spec.norm {
        Norm::RmsNorm => {
            let ms = x.iter().map(|v| v * v).sum::<f32>() / d;
            let inv = 1.0 / (ms + spec.norm_eps).sqrt();
            x.iter().zip(&n.weight).map(|(v, g)| v * inv * g).collect()
        }
        Norm::LayerNorm => {
            let mean = x.iter().sum::<f32>() / d;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d;
            let inv = 1.0 / (var + spec.norm_eps).sqrt();
            let bias = n.bias.as_deref();
            x.iter()
                .enumerate()
                .map(|(i, v)| (v - mean) * inv * n.weight[i] + bias.map_or(0.0, |b| b[i]))
                .collect()
        }
    }
}

pub(crate) fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

pub(crate) fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

struct Record {
    trace: bool,
    /// Logit position when not tracing.
    logit_pos: usize,
}

fn run(model: &Model, ids: &[u32], rec: Record) -> Result<ForwardTrace, RuntimeError> {
    let spec = &model.spec;
    let t = ids.len();
    if t == 0 {
        return Err(RuntimeError::Format("empty token sequence".into()));
    }
    if t > spec.max_seq_len {
        return Err(RuntimeError::SequenceTooLong { len: t, max: spec.max_seq_len });
    }
    let (d, hd, nh, nkv) = (spec.d_model, spec.head_dim, spec.n_heads, spec.n_kv_heads);
    let (qw, kw) = (nh * hd, nkv * hd);
    let scale = 1.0 / (hd as f32).sqrt();

    let mut x = vec![0f32; t * d];
    for (p, &id) in ids.iter().enumerate() {
        let id = id as usize;
        if id >= spec.vocab_size {
            return Err(RuntimeError::Format(format!("token id {id} outside vocabulary")));
        }
        x[p * d..(p + 1) * d].copy_from_slice(&model.tok_embeddings[id * d..(id + 1) * d]);
    }

    let mut out = ForwardTrace {
        seq_len: t,
        q_pre: Vec::new(),
        k_pre: Vec::new(),
        q_post: Vec::new(),
        k_post: Vec::new(),
        attention: Vec::new(),
        logits: Vec::new(),
    };
    for layer in &model.layers {
        let mut q = vec![0f32; t * qw];
        let mut k = vec![0f32; t * kw];
        let mut v = vec![0f32; t * kw];
        for p in 0..t {
            let h = normalize(spec, &layer.attn_norm, &x[p * d..(p + 1) * d]);
            matvec(&layer.wq, qw, d, &h, &mut q[p * qw..(p + 1) * qw]);
            matvec(&layer.wk, kw, d, &h, &mut k[p * kw..(p + 1) * kw]);
            matvec(&layer.wv, kw, d, &h, &mut v[p * kw..(p + 1) * kw]);
        }
        out.q_pre.push(q.clone());
        out.k_pre.push(k.clone());
        if let Positional::Rope { theta } = spec.positional {
            for p in 0..t {
                for head in q[p * qw..(p + 1) * qw].chunks_exact_mut(hd) {
                    rope::rotate(head, p, theta);
                }
                for head in k[p * kw..(p + 1) * kw].chunks_exact_mut(hd) {
                    rope::rotate(head, p, theta);
                }
            }
        }

        let mut mixed = vec![0f32; t * qw];
        let mut weights = Vec::with_capacity(if rec.trace { nh } else { 0 });
        for h in 0..nh {
            let g = spec.kv_head(h);
            let mut w_all = if rec.trace { vec![0f32; t * t] } else { Vec::new() };
            let mut row = vec![0f32; t];
            for i in 0..t {
                let qi = &q[i * qw + h * hd..i * qw + (h + 1) * hd];
                let mut max = f32::NEG_INFINITY;
                for (j, r) in row.iter_mut().enumerate().take(i + 1) {
                    let kj = &k[j * kw + g * hd..j * kw + (g + 1) * hd];
                    *r = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
                    max = max.max(*r);
                }
                let mut sum = 0f32;
                for r in row.iter_mut().take(i + 1) {
                    *r = (*r - max).exp();
                    sum += *r;
                }
                let o = &mut mixed[i * qw + h * hd..i * qw + (h + 1) * hd];
                for (j, r) in row.iter_mut().enumerate().take(i + 1) {
                    *r /= sum;
                    let vj = &v[j * kw + g * hd..j * kw + (g + 1) * hd];
                    for (oc, vc) in o.iter_mut().zip(vj) {
                        *oc += *r * vc;
                    }
                }
                if rec.trace {
                    w_all[i * t..i * t + i + 1].copy_from_slice(&row[..i + 1]);
                }
            }
            if rec.trace {
                weights.push(w_all);
            }
        }
        out.attention.push(weights);
        out.q_post.push(q);
        out.k_post.push(k);

        let mut proj = vec![0f32; d];
        for p in 0..t {
            matvec(&layer.wo, d, qw, &mixed[p * qw..(p + 1) * qw], &mut proj);
            for (xc, pc) in x[p * d..(p + 1) * d].iter_mut().zip(&proj) {
                *xc += pc;
            }
        }

        let f = spec.d_ff;
        let mut a = vec![0f32; f];
        let mut b = vec![0f32; f];
        for p in 0..t {
            let h = normalize(spec, &layer.ffn_norm, &x[p * d..(p + 1) * d]);
            matvec(&layer.w1, f, d, &h, &mut a);
            match spec.ffn {
                Ffn::Gelu => a.iter_mut().for_each(|z| *z = gelu(*z)),
                Ffn::Swiglu => {
                    let w3 = layer.w3.as_deref().expect("swiglu has w3");
                    matvec(w3, f, d, &h, &mut b);
                    a.iter_mut().zip(&b).for_each(|(z, g)| *z = silu(*z) * g);
                }
            }
            matvec(&layer.w2, d, f, &a, &mut proj);
            for (xc, pc) in x[p * d..(p + 1) * d].iter_mut().zip(&proj) {
                *xc += pc;
            }
        }
    }

    let vsz = spec.vocab_size;
    let positions: Vec<usize> = if rec.trace { (0..t).collect() } else { vec![rec.logit_pos] };
    out.logits = vec![0f32; positions.len() * vsz];
    for (slot, &p) in positions.iter().enumerate() {
        let h = normalize(spec, &model.norm, &x[p * d..(p + 1) * d]);
        matvec(model.unembedding(), vsz, d, &h, &mut out.logits[slot * vsz..(slot + 1) * vsz]);
    }
    if !rec.trace {
        out.seq_len = 1;
    }
    Ok(out)
}

/// Full forward pass keeping attention weights and logits at every position.
pub fn forward_trace(model: &Model, ids: &[u32]) -> Result<ForwardTrace, RuntimeError> {
    run(model, ids, Record { trace: true, logit_pos: 0 })
}

fn head_vectors(q: &[f32], k: &[f32], spec: &ModelSpec, layout: &PromptLayout, head: usize) -> HeadVectors {
    let (hd, qw, kw) = (spec.head_dim, spec.n_heads * spec.head_dim, spec.n_kv_heads * spec.head_dim);
    let g = spec.kv_head(head);
    let q_at = |pos: usize| q[pos * qw + head * hd..pos * qw + (head + 1) * hd].to_vec();
    HeadVectors {
        q_a0: q_at(layout.pos_a0),
        q_a1: q_at(layout.pos_a1),
        k_s: k[layout.pos_s * kw + g * hd..layout.pos_s * kw + (g + 1) * hd].to_vec(),
    }
}

/// Softmax weight the option query places on the statement-EOL key, taken
/// over all keys with the causal mask ignored.
fn unmasked_weight(q: &[f32], k: &[f32], spec: &ModelSpec, seq: usize, q_pos: usize, head: usize, target: usize) -> f32 {
    let (hd, qw, kw) = (spec.head_dim, spec.n_heads * spec.head_dim, spec.n_kv_heads * spec.head_dim);
    let g = spec.kv_head(head);
    let qi = &q[q_pos * qw + head * hd..q_pos * qw + (head + 1) * hd];
    let scale = 1.0 / (hd as f32).sqrt();
    let scores: Vec<f32> = (0..seq)
        .map(|j| qi.iter().zip(&k[j * kw + g * hd..j * kw + (g + 1) * hd]).map(|(a, b)| a * b).sum::<f32>() * scale)
        .collect();
    let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let sum: f32 = scores.iter().map(|s| (s - max).exp()).sum();
    (scores[target] - max).exp() / sum
}

/// One forward pass, capturing q at both option anchors and k at the
/// statement EOL for every head, in both positional variants.
pub fn forward_capture(
    model: &Model,
    layout: &PromptLayout,
    sample_id: &str,
    with_attention: bool,
    with_full_logits: bool,
) -> Result<QKCapture, RuntimeError> {
    let t = layout.token_ids.len();
    for (name, pos) in [("a0", layout.pos_a0), ("a1", layout.pos_a1), ("eol", layout.pos_s), ("final", layout.pos_final)] {
        if pos >= t {
            return Err(RuntimeError::SpanResolution { span: name.into(), start: pos });
        }
    }
    let trace = run(model, &layout.token_ids, Record { trace: false, logit_pos: layout.pos_final })?;
    let spec = &model.spec;
    let mut pre = Vec::with_capacity(spec.n_units());
    let mut post = Vec::with_capacity(spec.n_units());
    let mut attention = Vec::new();
    for l in 0..spec.n_layers {
        for h in 0..spec.n_heads {
            pre.push(head_vectors(&trace.q_pre[l], &trace.k_pre[l], spec, layout, h));
            post.push(head_vectors(&trace.q_post[l], &trace.k_post[l], spec, layout, h));
            if with_attention {
                let (q, k) = (&trace.q_post[l], &trace.k_post[l]);
                attention.push([
                    unmasked_weight(q, k, spec, t, layout.pos_a0, h, layout.pos_s),
                    unmasked_weight(q, k, spec, t, layout.pos_a1, h, layout.pos_s),
                ]);
            }
        }
    }
    let logits = trace.logits_at(0);
    Ok(QKCapture {
        sample_id: sample_id.to_string(),
        pos_a0: layout.pos_a0,
        pos_a1: layout.pos_a1,
        pos_s: layout.pos_s,
        pos_final: layout.pos_final,
        seq_len: t,
        pre,
        post: Some(post),
        option_ids: layout.option_ids,
        option_logits: [logits[layout.option_ids[0] as usize], logits[layout.option_ids[1] as usize]],
        logits_final: with_full_logits.then(|| logits.to_vec()),
        attention: with_attention.then_some(attention),
    })
}
