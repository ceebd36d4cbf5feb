// SPDX-License-Identifier: MIT OR Apache-2.0

//! Planted-head verification models.
//!
//! Two residual channels are reserved: `LABEL` is `+1` on `<eol+>` and `-1`
//! on `<eol->` (the marker template puts one of them at the statement end
//! according to the gold answer), and `OPTION` is `+1` on the a0 option words
//! and `-1` on the a1 option words. No layer writes either channel and only
//! the planted head reads them: its query is `OPTION` and its key is `LABEL`
//! on one head dimension, so before rotation `s0 - s1 = 2 * c * label` for
//! some `c > 0`, and the sign of `s0 - s1` equals the gold answer. The
//! dimension is the slowest rotary pair with its partner left empty, so after
//! rotation both scores only pick up a factor close to 1. Everything else is seeded random weights that
//! never see the label, so other heads and the output logits are blind to it.
//! The option words share an output row, so the baseline always ties.

use super::HarnessError;
use crate::runtime::tokenizer::{EOL_FALSE, EOL_TRUE};
use crate::runtime::{HeadId, Model, ModelSpec, Norm, Vocab};

pub const MAX_PLANT_LAYERS: usize = 4;
pub const MAX_PLANT_HEADS: usize = 8;
const GAIN: f32 = 4.0;

/// A planted spec for the closed vocabulary.
pub fn planted_spec(n_layers: usize, n_heads: usize, head_dim: usize) -> ModelSpec {
    ModelSpec::toy(n_layers, n_heads, head_dim, Vocab::closed().len())
}

fn zero_columns(w: &mut [f32], cols: usize, which: &[usize]) {
    for row in w.chunks_exact_mut(cols) {
        for &c in which {
            row[c] = 0.0;
        }
    }
}

fn zero_rows(w: &mut [f32], cols: usize, rows: impl Iterator<Item = usize>) {
    for r in rows {
        w[r * cols..(r + 1) * cols].fill(0.0);
    }
}

pub fn build_planted_model(spec: &ModelSpec, planted: HeadId, seed: u64) -> Result<Model, HarnessError> {
    if spec.n_layers > MAX_PLANT_LAYERS || spec.n_heads > MAX_PLANT_HEADS {
        return Err(HarnessError::SpecTooLarge(format!(
            "{} layers x {} heads (limit {MAX_PLANT_LAYERS} x {MAX_PLANT_HEADS})",
            spec.n_layers, spec.n_heads
        )));
    }
    if planted.layer >= spec.n_layers || planted.head >= spec.n_heads {
        return Err(HarnessError::Config(format!("planted head {planted} outside the spec")));
    }
    if spec.norm != Norm::RmsNorm || spec.d_model < 3 {
        return Err(HarnessError::Config("planted models need rmsnorm and d_model >= 3".into()));
    }
    let vocab = Vocab::closed();
    let mut spec = spec.clone();
    spec.vocab_size = vocab.len();
    let mut model = Model::random(spec, vocab, seed)?;
    let spec = model.spec.clone();
    let d = spec.d_model;
    let (label, option) = (d - 1, d - 2);
    let reserved = [label, option];

    zero_columns(&mut model.tok_embeddings, d, &reserved);
    let id = |t: &str| model.vocab.id(t).expect("closed vocabulary token") as usize;
    let (pos, neg) = (id(EOL_TRUE), id(EOL_FALSE));
    let shared: Vec<f32> = model.tok_embeddings[pos * d..(pos + 1) * d].to_vec();
    model.tok_embeddings[neg * d..(neg + 1) * d].copy_from_slice(&shared);
    model.tok_embeddings[pos * d + label] = 1.0;
    model.tok_embeddings[neg * d + label] = -1.0;
    for w in ["true", "yes"] {
        let i = id(w);
        model.tok_embeddings[i * d + option] = 1.0;
    }
    for w in ["false", "no"] {
        let i = id(w);
        model.tok_embeddings[i * d + option] = -1.0;
    }

    let hd = spec.head_dim;
    let qw = spec.n_heads * hd;
    let group = spec.kv_head(planted.head);
    let (dim, partner) = if hd >= 2 { (hd / 2 - 1, hd - 1) } else { (0, 0) };
    for (l, layer) in model.layers.iter_mut().enumerate() {
        // Nothing writes the reserved channels.
        zero_rows(&mut layer.wo, qw, reserved.iter().copied());
        zero_rows(&mut layer.w2, spec.d_ff, reserved.iter().copied());
        // Nothing but the planted head reads them.
        for w in [&mut layer.wq, &mut layer.wk, &mut layer.wv, &mut layer.w1] {
            zero_columns(w, d, &reserved);
        }
        if let Some(w3) = layer.w3.as_mut() {
            zero_columns(w3, d, &reserved);
        }
        if l != planted.layer {
            continue;
        }
        layer.attn_norm.weight[label] = 1.0;
        layer.attn_norm.weight[option] = 1.0;
        // Heads sharing the planted key head must not see its label pair.
        for h in (0..spec.n_heads).filter(|&h| spec.kv_head(h) == group) {
            zero_rows(&mut layer.wq, d, [h * hd + dim, h * hd + partner].into_iter());
        }
        zero_rows(&mut layer.wq, d, planted.head * hd..(planted.head + 1) * hd);
        layer.wq[(planted.head * hd + dim) * d + option] = GAIN;
        zero_rows(&mut layer.wk, d, [group * hd + dim, group * hd + partner].into_iter());
        layer.wk[(group * hd + dim) * d + label] = GAIN;
        // The planted head's output is dropped.
        for row in layer.wo.chunks_exact_mut(qw) {
            row[planted.head * hd..(planted.head + 1) * hd].fill(0.0);
        }
    }
    // Option words get identical output rows. The baseline then ties and
    // picks a0 everywhere, which is chance on balanced data. A random readout
    // would see the statement's negation and be correlated within each
    // negation pair.
    let mut out = model.output.take().unwrap_or_else(|| model.tok_embeddings.clone());
    model.spec.tied_embeddings = false;
    zero_columns(&mut out, d, &reserved);
    for (a0, a1) in [("true", "false"), ("yes", "no")] {
        let (a0, a1) = (id(a0), id(a1));
        let row = out[a0 * d..(a0 + 1) * d].to_vec();
        out[a1 * d..(a1 + 1) * d].copy_from_slice(&row);
    }
    model.output = Some(out);
    Ok(model)
}
