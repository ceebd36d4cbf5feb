// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RuntimeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[serde(rename = "layernorm")]
    LayerNorm,
    #[serde(rename = "rmsnorm")]
    RmsNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Positional {
    Rope { theta: f32 },
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ffn {
    /// `W2 gelu(W1 x)`
    Gelu,
    /// `W2 (silu(W1 x) * W3 x)`
    Swiglu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    pub head_dim: usize,
    pub d_model: usize,
    pub vocab_size: usize,
    pub d_ff: usize,
    pub norm: Norm,
    pub norm_eps: f32,
    pub positional: Positional,
    pub ffn: Ffn,
    pub tied_embeddings: bool,
    pub max_seq_len: usize,
}

impl ModelSpec {
    /// A small rope/rmsnorm/swiglu model with `d_model = n_heads * head_dim`.
    pub fn toy(n_layers: usize, n_heads: usize, head_dim: usize, vocab_size: usize) -> Self {
        ModelSpec {
            n_layers,
            n_heads,
            n_kv_heads: n_heads,
            head_dim,
            d_model: n_heads * head_dim,
            vocab_size,
            d_ff: 2 * n_heads * head_dim,
            norm: Norm::RmsNorm,
            norm_eps: 1e-5,
            positional: Positional::Rope { theta: 10_000.0 },
            ffn: Ffn::Swiglu,
            tied_embeddings: false,
            max_seq_len: 1024,
        }
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        let shape = |what: &str, expected: usize, got: usize| RuntimeError::ShapeMismatch {
            tensor: what.to_string(),
            expected: vec![expected],
            got: vec![got],
        };
        if self.n_layers == 0 || self.n_heads == 0 || self.head_dim == 0 || self.vocab_size == 0 {
            return Err(RuntimeError::Format("model dimensions must be positive".into()));
        }
        if self.d_model != self.n_heads * self.head_dim {
            return Err(shape("d_model", self.n_heads * self.head_dim, self.d_model));
        }
        if self.n_kv_heads == 0 || !self.n_heads.is_multiple_of(self.n_kv_heads) {
            return Err(RuntimeError::Format(format!(
                "n_heads {} not divisible by n_kv_heads {}",
                self.n_heads, self.n_kv_heads
            )));
        }
        if matches!(self.positional, Positional::Rope { .. }) && !self.head_dim.is_multiple_of(2) {
            return Err(RuntimeError::Format("rope needs an even head_dim".into()));
        }
        Ok(())
    }

    pub fn group_size(&self) -> usize {
        self.n_heads / self.n_kv_heads
    }

    /// Key/value head serving query head `head`.
    pub fn kv_head(&self, head: usize) -> usize {
        head / self.group_size()
    }

    pub fn n_units(&self) -> usize {
        self.n_layers * self.n_heads
    }

    pub fn heads(&self) -> impl Iterator<Item = HeadId> + '_ {
        (0..self.n_layers).flat_map(move |layer| (0..self.n_heads).map(move |head| HeadId { layer, head }))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("spec serializes")))
    }
}

/// An attention head: `(layer, head)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HeadId {
    pub layer: usize,
    pub head: usize,
}

impl HeadId {
    pub fn new(layer: usize, head: usize) -> Self {
        HeadId { layer, head }
    }

    pub fn index(&self, n_heads: usize) -> usize {
        self.layer * n_heads + self.head
    }
}

impl fmt::Display for HeadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.layer, self.head)
    }
}

impl std::str::FromStr for HeadId {
    type Err = RuntimeError;

    /// Accepts `L,H`, `L:H` or `(L, H)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let mut parts = inner.split([',', ':']).map(str::trim);
        let parse = |p: Option<&str>| p.and_then(|v| v.parse::<usize>().ok());
        match (parse(parts.next()), parse(parts.next()), parts.next()) {
            (Some(layer), Some(head), None) => Ok(HeadId { layer, head }),
            _ => Err(RuntimeError::Format(format!("bad head id `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_shapes() {
        let spec = ModelSpec::toy(2, 4, 8, 50);
        assert_eq!(spec.d_model, 32);
        spec.validate().unwrap();
        assert_eq!(spec.heads().count(), 8);
    }

    #[test]
    fn gqa_groups() {
        let mut spec = ModelSpec::toy(1, 4, 8, 10);
        spec.n_kv_heads = 2;
        assert_eq!((0..4).map(|h| spec.kv_head(h)).collect::<Vec<_>>(), vec![0, 0, 1, 1]);
        spec.n_kv_heads = 3;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn head_id_text() {
        assert_eq!("(26, 7)".parse::<HeadId>().unwrap(), HeadId::new(26, 7));
        assert_eq!("1:2".parse::<HeadId>().unwrap(), HeadId::new(1, 2));
        assert_eq!(HeadId::new(22, 16).to_string(), "(22, 16)");
        assert!("1".parse::<HeadId>().is_err());
    }
}
