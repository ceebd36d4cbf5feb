// SPDX-License-Identifier: MIT OR Apache-2.0

//! Model weights and the QKPM on-disk format.
//!
//! A QKPM model is a directory holding `manifest.json` and `weights.bin`.
//! The manifest records the spec, the tokenizer vocabulary, one index entry
//! per tensor (`name`, `shape`, byte `offset`, byte `length`) and the SHA-256
//! of the blob. The blob is the concatenation of all tensors as row-major
//! little-endian f32.
//!
//! Tensor names, with `D = d_model`, `H = n_heads`, `KV = n_kv_heads`,
//! `hd = head_dim`, `F = d_ff`, `V = vocab_size`:
//!
//! | name | shape |
//! |------|-------|
//! | `tok_embeddings` | `[V, D]` |
//! | `layers.{l}.attn_norm.weight` / `.bias` | `[D]` (bias for layernorm only) |
//! | `layers.{l}.attn.wq` | `[H*hd, D]` |
//! | `layers.{l}.attn.wk`, `layers.{l}.attn.wv` | `[KV*hd, D]` |
//! | `layers.{l}.attn.wo` | `[D, H*hd]` |
//! | `layers.{l}.ffn_norm.weight` / `.bias` | `[D]` |
//! | `layers.{l}.ffn.w1` | `[F, D]` |
//! | `layers.{l}.ffn.w2` | `[D, F]` |
//! | `layers.{l}.ffn.w3` | `[F, D]` (swiglu only) |
//! | `norm.weight` / `norm.bias` | `[D]` |
//! | `output` | `[V, D]` (absent when embeddings are tied) |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::spec::{Ffn, ModelSpec, Norm};
use super::tokenizer::Vocab;
use super::RuntimeError;

pub const QKPM_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const BLOB: &str = "weights.bin";

#[derive(Clone, Debug, PartialEq)]
pub struct NormWeights {
    pub weight: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: NormWeights,
    pub wq: Vec<f32>,
    pub wk: Vec<f32>,
    pub wv: Vec<f32>,
    pub wo: Vec<f32>,
    pub ffn_norm: NormWeights,
    pub w1: Vec<f32>,
    pub w2: Vec<f32>,
    pub w3: Option<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub vocab: Vocab,
    pub tok_embeddings: Vec<f32>,
    pub layers: Vec<LayerWeights>,
    pub norm: NormWeights,
    pub output: Option<Vec<f32>>,
}

/// Expected tensor names and shapes, in blob order.
pub fn tensor_layout(spec: &ModelSpec) -> Vec<(String, Vec<usize>)> {
    let (d, hd, f, v) = (spec.d_model, spec.head_dim, spec.d_ff, spec.vocab_size);
    let layernorm = spec.norm == Norm::LayerNorm;
    let mut out = vec![("tok_embeddings".to_string(), vec![v, d])];
    let norm = |out: &mut Vec<(String, Vec<usize>)>, prefix: &str| {
        out.push((format!("{prefix}.weight"), vec![d]));
        if layernorm {
            out.push((format!("{prefix}.bias"), vec![d]));
        }
    };
    for l in 0..spec.n_layers {
        norm(&mut out, &format!("layers.{l}.attn_norm"));
        out.push((format!("layers.{l}.attn.wq"), vec![spec.n_heads * hd, d]));
        out.push((format!("layers.{l}.attn.wk"), vec![spec.n_kv_heads * hd, d]));
        out.push((format!("layers.{l}.attn.wv"), vec![spec.n_kv_heads * hd, d]));
        out.push((format!("layers.{l}.attn.wo"), vec![d, spec.n_heads * hd]));
        norm(&mut out, &format!("layers.{l}.ffn_norm"));
        out.push((format!("layers.{l}.ffn.w1"), vec![f, d]));
        out.push((format!("layers.{l}.ffn.w2"), vec![d, f]));
        if spec.ffn == Ffn::Swiglu {
            out.push((format!("layers.{l}.ffn.w3"), vec![f, d]));
        }
    }
    norm(&mut out, "norm");
    if !spec.tied_embeddings {
        out.push(("output".to_string(), vec![v, d]));
    }
    out
}

impl Model {
    /// Seeded random weights: matrices uniform with variance `1/fan_in`, norm
    /// gains near one and biases near zero.
    pub fn random(spec: ModelSpec, vocab: Vocab, seed: u64) -> Result<Model, RuntimeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for (name, shape) in tensor_layout(&spec) {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = if name.ends_with(".weight") {
                (0..n).map(|_| 1.0 + rng.gen_range(-0.1..0.1)).collect()
            } else if name.ends_with(".bias") {
                (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect()
            } else {
                let a = (3.0 / shape[1] as f32).sqrt();
                (0..n).map(|_| rng.gen_range(-a..a)).collect()
            };
            tensors.insert(name, data);
        }
        Model::from_tensors(spec, vocab, tensors)
    }

    /// Assembles a model from named tensors, validating every shape.
    pub fn from_tensors(
        spec: ModelSpec,
        vocab: Vocab,
        mut tensors: BTreeMap<String, Vec<f32>>,
    ) -> Result<Model, RuntimeError> {
        spec.validate()?;
        if vocab.len() != spec.vocab_size {
            return Err(RuntimeError::ShapeMismatch {
                tensor: "vocab".into(),
                expected: vec![spec.vocab_size],
                got: vec![vocab.len()],
            });
        }
        for (name, shape) in tensor_layout(&spec) {
            let want: usize = shape.iter().product();
            match tensors.get(&name) {
                None => return Err(RuntimeError::Format(format!("missing tensor {name}"))),
                Some(t) if t.len() != want => {
                    return Err(RuntimeError::ShapeMismatch { tensor: name, expected: shape, got: vec![t.len()] })
                }
                Some(_) => {}
            }
        }
        let mut take = |name: String| tensors.remove(&name).expect("checked above");
        let layernorm = spec.norm == Norm::LayerNorm;
        let norm = |take: &mut dyn FnMut(String) -> Vec<f32>, prefix: &str| NormWeights {
            weight: take(format!("{prefix}.weight")),
            bias: layernorm.then(|| take(format!("{prefix}.bias"))),
        };
        let tok_embeddings = take("tok_embeddings".into());
        let mut layers = Vec::with_capacity(spec.n_layers);
        for l in 0..spec.n_layers {
            layers.push(LayerWeights {
                attn_norm: norm(&mut take, &format!("layers.{l}.attn_norm")),
                wq: take(format!("layers.{l}.attn.wq")),
                wk: take(format!("layers.{l}.attn.wk")),
                wv: take(format!("layers.{l}.attn.wv")),
                wo: take(format!("layers.{l}.attn.wo")),
                ffn_norm: norm(&mut take, &format!("layers.{l}.ffn_norm")),
                w1: take(format!("layers.{l}.ffn.w1")),
                w2: take(format!("layers.{l}.ffn.w2")),
                w3: (spec.ffn == Ffn::Swiglu).then(|| take(format!("layers.{l}.ffn.w3"))),
            });
        }
        let final_norm = norm(&mut take, "norm");
        let output = (!spec.tied_embeddings).then(|| take("output".into()));
        if let Some(extra) = tensors.keys().next() {
            return Err(RuntimeError::Format(format!("unexpected tensor {extra}")));
        }
        Ok(Model { spec, vocab, tok_embeddings, layers, norm: final_norm, output })
    }

    /// Named tensors in blob order.
    pub fn tensors(&self) -> Vec<(String, &[f32])> {
        let mut out: Vec<(String, &[f32])> = vec![("tok_embeddings".into(), &self.tok_embeddings)];
        fn push_norm<'a>(out: &mut Vec<(String, &'a [f32])>, prefix: &str, n: &'a NormWeights) {
            out.push((format!("{prefix}.weight"), &n.weight));
            if let Some(b) = &n.bias {
                out.push((format!("{prefix}.bias"), b));
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            push_norm(&mut out, &format!("layers.{l}.attn_norm"), &layer.attn_norm);
            out.push((format!("layers.{l}.attn.wq"), &layer.wq));
            out.push((format!("layers.{l}.attn.wk"), &layer.wk));
            out.push((format!("layers.{l}.attn.wv"), &layer.wv));
            out.push((format!("layers.{l}.attn.wo"), &layer.wo));
            push_norm(&mut out, &format!("layers.{l}.ffn_norm"), &layer.ffn_norm);
            out.push((format!("layers.{l}.ffn.w1"), &layer.w1));
            out.push((format!("layers.{l}.ffn.w2"), &layer.w2));
            if let Some(w3) = &layer.w3 {
                out.push((format!("layers.{l}.ffn.w3"), w3));
            }
        }
        push_norm(&mut out, "norm", &self.norm);
        if let Some(o) = &self.output {
            out.push(("output".into(), o));
        }
        out
    }

    /// Unembedding matrix `[V, D]`.
    pub fn unembedding(&self) -> &[f32] {
        self.output.as_deref().unwrap_or(&self.tok_embeddings)
    }

    /// SHA-256 over the spec digest and all tensor bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.spec.digest().as_bytes());
        for t in self.vocab.tokens() {
            h.update(t.as_bytes());
            h.update([0]);
        }
        for (_, data) in self.tensors() {
            for x in data {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    spec: ModelSpec,
    vocab: Vec<String>,
    tensors: Vec<TensorEntry>,
    sha256: String,
}

pub fn save_model(model: &Model, dir: &Path) -> Result<(), RuntimeError> {
    fs::create_dir_all(dir)?;
    let layout: BTreeMap<String, Vec<usize>> = tensor_layout(&model.spec).into_iter().collect();
    let mut blob = Vec::new();
    let mut entries = Vec::new();
    for (name, data) in model.tensors() {
        let offset = blob.len();
        for x in data {
            blob.extend_from_slice(&x.to_le_bytes());
        }
        entries.push(TensorEntry { shape: layout[&name].clone(), name, offset, length: blob.len() - offset });
    }
    let manifest = Manifest {
        format: "qkpm".into(),
        version: QKPM_VERSION,
        spec: model.spec.clone(),
        vocab: model.vocab.tokens().to_vec(),
        tensors: entries,
        sha256: hex::encode(Sha256::digest(&blob)),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| RuntimeError::Format(e.to_string()))?;
    fs::write(dir.join(MANIFEST), json + "\n")?;
    fs::write(dir.join(BLOB), blob)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<Model, RuntimeError> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| RuntimeError::Format(format!("{MANIFEST}: {e}")))?;
    if manifest.format != "qkpm" {
        return Err(RuntimeError::Format(format!("not a qkpm manifest: {}", manifest.format)));
    }
    if manifest.version != QKPM_VERSION {
        return Err(RuntimeError::VersionMismatch { found: manifest.version, expected: QKPM_VERSION });
    }
    let blob = fs::read(dir.join(BLOB))?;
    let actual = hex::encode(Sha256::digest(&blob));
    if actual != manifest.sha256 {
        return Err(RuntimeError::ChecksumMismatch { expected: manifest.sha256, actual });
    }
    manifest.spec.validate()?;
    let expected: BTreeMap<String, Vec<usize>> = tensor_layout(&manifest.spec).into_iter().collect();
    let mut tensors = BTreeMap::new();
    for e in manifest.tensors {
        let Some(shape) = expected.get(&e.name) else {
            return Err(RuntimeError::Format(format!("unexpected tensor {}", e.name)));
        };
        if &e.shape != shape {
            return Err(RuntimeError::ShapeMismatch { tensor: e.name, expected: shape.clone(), got: e.shape });
        }
        let n: usize = e.shape.iter().product();
        if e.length != 4 * n || e.offset.checked_add(e.length).is_none_or(|end| end > blob.len()) {
            return Err(RuntimeError::Format(format!("tensor {} has a bad extent", e.name)));
        }
        let data = blob[e.offset..e.offset + e.length]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.insert(e.name, data);
    }
    let vocab = Vocab::from_tokens(manifest.vocab)?;
    Model::from_tensors(manifest.spec, vocab, tensors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Model {
        let vocab = Vocab::new(["a", "b", "c"].map(String::from));
        Model::random(ModelSpec::toy(2, 4, 8, vocab.len()), vocab, 1).unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let m = toy();
        let dir = tempfile::tempdir().unwrap();
        save_model(&m, dir.path()).unwrap();
        assert_eq!(load_model(dir.path()).unwrap(), m);
        assert_eq!(m.spec.d_model, 32);
    }

    #[test]
    fn truncated_blob_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&toy(), dir.path()).unwrap();
        let blob = fs::read(dir.path().join(BLOB)).unwrap();
        fs::write(dir.path().join(BLOB), &blob[..blob.len() - 4]).unwrap();
        assert!(matches!(load_model(dir.path()), Err(RuntimeError::ChecksumMismatch { .. })));
    }

    #[test]
    fn wrong_query_rows_is_a_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&toy(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        for t in v["tensors"].as_array_mut().unwrap() {
            if t["name"] == "layers.0.attn.wq" {
                t["shape"] = serde_json::json!([24, 32]);
            }
        }
        fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(load_model(dir.path()), Err(RuntimeError::ShapeMismatch { .. })));
    }

    #[test]
    fn random_is_seeded() {
        assert_eq!(toy(), toy());
        assert_eq!(toy().digest(), toy().digest());
    }
}
