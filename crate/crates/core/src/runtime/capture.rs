// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-sample q/k captures and their binary file format.
//!
//! File layout:
//!
//! ```text
//! QKCAPTURE <version>\n
//! <one-line JSON header>\n
//! <count sample blocks>
//! ```
//!
//! The header holds `spec`, `spec_digest`, `variants` (`["pre"]` or
//! `["pre", "post"]`), `count`, `has_full_logits` and `has_attention`.
//! A sample block, all integers u32 and all reals f32, little-endian:
//!
//! ```text
//! id_len, id bytes (utf-8)
//! pos_a0, pos_a1, pos_s, pos_final, seq_len
//! for each variant, for each (layer, head) in row-major order: q_a0, q_a1, k_s
//! option_id[2], option_logit[2]
//! logits_final[vocab_size]            if has_full_logits
//! attention[layer * head][2]          if has_attention
//! ```

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spec::{HeadId, ModelSpec};
use super::RuntimeError;

pub const CAPTURE_VERSION: u32 = 1;
const MAGIC: &str = "QKCAPTURE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Before the positional rotation.
    #[serde(rename = "pre")]
    PrePositional,
    #[serde(rename = "post")]
    PostPositional,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::PrePositional => "pre",
            Variant::PostPositional => "post",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = RuntimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pre" | "pre_positional" => Ok(Variant::PrePositional),
            "post" | "post_positional" => Ok(Variant::PostPositional),
            _ => Err(RuntimeError::Format(format!("unknown variant `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadVectors {
    pub q_a0: Vec<f32>,
    pub q_a1: Vec<f32>,
    pub k_s: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QKCapture {
    pub sample_id: String,
    pub pos_a0: usize,
    pub pos_a1: usize,
    pub pos_s: usize,
    pub pos_final: usize,
    pub seq_len: usize,
    /// Indexed by `layer * n_heads + head`.
    pub pre: Vec<HeadVectors>,
    pub post: Option<Vec<HeadVectors>>,
    pub option_ids: [u32; 2],
    pub option_logits: [f32; 2],
    pub logits_final: Option<Vec<f32>>,
    /// Unmasked softmax weight from each option query to the EOL key.
    pub attention: Option<Vec<[f32; 2]>>,
}

impl QKCapture {
    pub fn vectors(&self, variant: Variant) -> Option<&[HeadVectors]> {
        match variant {
            Variant::PrePositional => Some(&self.pre),
            Variant::PostPositional => self.post.as_deref(),
        }
    }

    pub fn head(&self, variant: Variant, head: HeadId, n_heads: usize) -> Option<&HeadVectors> {
        if head.head >= n_heads {
            return None;
        }
        self.vectors(variant)?.get(head.index(n_heads))
    }
}

/// Captures sharing one model spec.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptureSet {
    pub spec: ModelSpec,
    pub captures: Vec<QKCapture>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    spec_digest: String,
    variants: Vec<Variant>,
    count: usize,
    has_full_logits: bool,
    has_attention: bool,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), RuntimeError> {
    let v = u32::try_from(v).map_err(|_| RuntimeError::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, xs: &[f32]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), RuntimeError> {
    if got != want {
        return Err(RuntimeError::Format(format!("{what}: length {got}, expected {want}")));
    }
    Ok(())
}

/// Checks every capture against the spec and the set-wide flags.
fn validate(set: &CaptureSet) -> Result<(bool, bool, bool), RuntimeError> {
    let spec = &set.spec;
    spec.validate()?;
    let first = set.captures.first();
    let has_post = first.is_none_or(|c| c.post.is_some());
    let full = first.is_some_and(|c| c.logits_final.is_some());
    let attn = first.is_some_and(|c| c.attention.is_some());
    for c in &set.captures {
        let id = &c.sample_id;
        if c.post.is_some() != has_post || c.logits_final.is_some() != full || c.attention.is_some() != attn {
            return Err(RuntimeError::Format(format!("{id}: captures disagree on optional fields")));
        }
        for hv in c.pre.iter().chain(c.post.iter().flatten()) {
            for v in [&hv.q_a0, &hv.q_a1, &hv.k_s] {
                check_len(&format!("{id} head vector"), v.len(), spec.head_dim)?;
            }
        }
        check_len(&format!("{id} pre heads"), c.pre.len(), spec.n_units())?;
        if let Some(post) = &c.post {
            check_len(&format!("{id} post heads"), post.len(), spec.n_units())?;
        }
        if let Some(l) = &c.logits_final {
            check_len(&format!("{id} logits"), l.len(), spec.vocab_size)?;
        }
        if let Some(a) = &c.attention {
            check_len(&format!("{id} attention"), a.len(), spec.n_units())?;
        }
    }
    Ok((has_post, full, attn))
}

pub fn write_capture(set: &CaptureSet, path: &Path) -> Result<(), RuntimeError> {
    let (has_post, full, attn) = validate(set)?;
    let mut variants = vec![Variant::PrePositional];
    if has_post {
        variants.push(Variant::PostPositional);
    }
    let header = Header {
        spec: set.spec.clone(),
        spec_digest: set.spec.digest(),
        variants: variants.clone(),
        count: set.captures.len(),
        has_full_logits: full,
        has_attention: attn,
    };
    let mut out = format!("{MAGIC} {CAPTURE_VERSION}\n").into_bytes();
    serde_json::to_writer(&mut out, &header).map_err(|e| RuntimeError::Format(e.to_string()))?;
    out.push(b'\n');
    for c in &set.captures {
        put_u32(&mut out, c.sample_id.len())?;
        out.extend_from_slice(c.sample_id.as_bytes());
        for p in [c.pos_a0, c.pos_a1, c.pos_s, c.pos_final, c.seq_len] {
            put_u32(&mut out, p)?;
        }
        for &v in &variants {
            for hv in c.vectors(v).expect("validated") {
                put_f32s(&mut out, &hv.q_a0);
                put_f32s(&mut out, &hv.q_a1);
                put_f32s(&mut out, &hv.k_s);
            }
        }
        for id in c.option_ids {
            put_u32(&mut out, id as usize)?;
        }
        put_f32s(&mut out, &c.option_logits);
        if let Some(l) = &c.logits_final {
            put_f32s(&mut out, l);
        }
        if let Some(a) = &c.attention {
            for pair in a {
                put_f32s(&mut out, pair);
            }
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], RuntimeError> {
        if self.buf.len() - self.at < n {
            return Err(RuntimeError::Format("capture file is truncated".into()));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, RuntimeError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, RuntimeError> {
        Ok(self.take(4 * n)?.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }
}

pub fn read_capture(path: &Path) -> Result<CaptureSet, RuntimeError> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut magic = String::new();
    reader.read_line(&mut magic)?;
    let version = match magic.trim_end().split_once(' ') {
        Some((MAGIC, v)) => v.parse::<u32>().map_err(|_| RuntimeError::Format("bad capture version".into()))?,
        _ => return Err(RuntimeError::Format("not a capture file".into())),
    };
    if version != CAPTURE_VERSION {
        return Err(RuntimeError::VersionMismatch { found: version, expected: CAPTURE_VERSION });
    }
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: Header =
        serde_json::from_str(&line).map_err(|e| RuntimeError::Format(format!("capture header: {e}")))?;
    let spec = header.spec;
    spec.validate()?;
    if spec.digest() != header.spec_digest {
        return Err(RuntimeError::Format("capture header spec digest does not match its spec".into()));
    }
    if header.variants.first() != Some(&Variant::PrePositional)
        || header.variants.len() > 2
        || header.variants.get(1).is_some_and(|v| *v != Variant::PostPositional)
    {
        return Err(RuntimeError::Format(format!("unsupported variant list {:?}", header.variants)));
    }
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;
    let mut cur = Cursor { buf: &body, at: 0 };
    let hd = spec.head_dim;
    let units = spec.n_units();
    let mut captures = Vec::with_capacity(header.count);
    for _ in 0..header.count {
        let n = cur.u32()?;
        let sample_id = String::from_utf8(cur.take(n)?.to_vec())
            .map_err(|_| RuntimeError::Format("sample id is not utf-8".into()))?;
        let pos: Vec<usize> = (0..5).map(|_| cur.u32()).collect::<Result<_, _>>()?;
        let mut per_variant = Vec::new();
        for _ in &header.variants {
            let mut heads = Vec::with_capacity(units);
            for _ in 0..units {
                heads.push(HeadVectors { q_a0: cur.f32s(hd)?, q_a1: cur.f32s(hd)?, k_s: cur.f32s(hd)? });
            }
            per_variant.push(heads);
        }
        let option_ids = [cur.u32()? as u32, cur.u32()? as u32];
        let ol = cur.f32s(2)?;
        let logits_final = if header.has_full_logits { Some(cur.f32s(spec.vocab_size)?) } else { None };
        let attention = if header.has_attention {
            Some(cur.f32s(2 * units)?.chunks_exact(2).map(|p| [p[0], p[1]]).collect())
        } else {
            None
        };
        let mut per_variant = per_variant.into_iter();
        captures.push(QKCapture {
            sample_id,
            pos_a0: pos[0],
            pos_a1: pos[1],
            pos_s: pos[2],
            pos_final: pos[3],
            seq_len: pos[4],
            pre: per_variant.next().expect("pre present"),
            post: per_variant.next(),
            option_ids,
            option_logits: [ol[0], ol[1]],
            logits_final,
            attention,
        });
    }
    if cur.at != body.len() {
        return Err(RuntimeError::Format(format!("{} trailing bytes after {} samples", body.len() - cur.at, header.count)));
    }
    Ok(CaptureSet { spec, captures })
}
