// SPDX-License-Identifier: MIT OR Apache-2.0

//! QK-scores, head and baseline decisions, and score tables.
//!
//! The score of option `a_i` at head `(l, h)` is the raw dot product
//! `q_{a_i} . k_s`: no scaling, no mask, no softmax.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::Answer;
use crate::runtime::{CaptureSet, HeadId, ModelSpec, QKCapture, Variant};

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("head {head} outside {n_layers} layers x {n_heads} heads")]
    HeadOutOfRange { head: HeadId, n_layers: usize, n_heads: usize },
    #[error("capture {sample_id} lacks the {variant} variant")]
    MissingVariant { sample_id: String, variant: Variant },
    #[error("capture {0} lacks option logits")]
    MissingLogits(String),
    #[error("incomplete captures: {0}")]
    IncompleteCaptures(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Direct,
    Reversed,
}

impl Orientation {
    pub fn apply(self, answer: Answer) -> Answer {
        match self {
            Orientation::Direct => answer,
            Orientation::Reversed => answer.flipped(),
        }
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_head(spec: &ModelSpec, head: HeadId) -> Result<(), ProbeError> {
    if head.layer >= spec.n_layers || head.head >= spec.n_heads {
        return Err(ProbeError::HeadOutOfRange { head, n_layers: spec.n_layers, n_heads: spec.n_heads });
    }
    Ok(())
}

/// Both option scores `(s0, s1)` at one head.
pub fn qk_scores(spec: &ModelSpec, capture: &QKCapture, head: HeadId, variant: Variant) -> Result<(f32, f32), ProbeError> {
    check_head(spec, head)?;
    let hv = capture.head(variant, head, spec.n_heads).ok_or_else(|| ProbeError::MissingVariant {
        sample_id: capture.sample_id.clone(),
        variant,
    })?;
    Ok((dot(&hv.q_a0, &hv.k_s), dot(&hv.q_a1, &hv.k_s)))
}

pub fn qk_score(
    spec: &ModelSpec,
    capture: &QKCapture,
    head: HeadId,
    option: Answer,
    variant: Variant,
) -> Result<f32, ProbeError> {
    let (s0, s1) = qk_scores(spec, capture, head, variant)?;
    Ok(match option {
        Answer::A0 => s0,
        Answer::A1 => s1,
    })
}

/// `a0` iff `s0 >= s1`, then flipped for a reversed head.
pub fn decide_scores(s0: f32, s1: f32, orientation: Orientation) -> Answer {
    let raw = if s1 > s0 { Answer::A1 } else { Answer::A0 };
    orientation.apply(raw)
}

pub fn decide_qk(
    spec: &ModelSpec,
    capture: &QKCapture,
    head: HeadId,
    orientation: Orientation,
    variant: Variant,
) -> Result<Answer, ProbeError> {
    let (s0, s1) = qk_scores(spec, capture, head, variant)?;
    Ok(decide_scores(s0, s1, orientation))
}

/// Argmax of the two option logits at the final position, ties to `a0`.
pub fn decide_logits(l0: f32, l1: f32) -> Answer {
    if l1 > l0 {
        Answer::A1
    } else {
        Answer::A0
    }
}

pub fn decide_baseline(capture: &QKCapture) -> Result<Answer, ProbeError> {
    let [l0, l1] = capture.option_logits;
    if !l0.is_finite() || !l1.is_finite() {
        return Err(ProbeError::MissingLogits(capture.sample_id.clone()));
    }
    Ok(decide_logits(l0, l1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub head: HeadId,
    pub s0: f32,
    pub s1: f32,
    pub variant: Variant,
}

/// Complete samples x heads grid of scores, with gold answers and baseline
/// decisions. Samples are kept sorted by id, heads in (layer, head) order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub n_layers: usize,
    pub n_heads: usize,
    pub variant: Variant,
    pub dataset_digest: String,
    pub sample_ids: Vec<String>,
    pub gold: Vec<Answer>,
    pub baseline: Vec<Answer>,
    /// `scores[sample][layer * n_heads + head] = (s0, s1)`
    pub scores: Vec<Vec<(f32, f32)>>,
}

impl ScoreTable {
    pub fn n_units(&self) -> usize {
        self.n_layers * self.n_heads
    }

    pub fn heads(&self) -> impl Iterator<Item = HeadId> + '_ {
        (0..self.n_layers).flat_map(move |l| (0..self.n_heads).map(move |h| HeadId::new(l, h)))
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn record(&self, sample: usize, head: HeadId) -> ScoreRecord {
        let (s0, s1) = self.scores[sample][head.index(self.n_heads)];
        ScoreRecord { sample_id: self.sample_ids[sample].clone(), head, s0, s1, variant: self.variant }
    }

    pub fn records(&self) -> impl Iterator<Item = ScoreRecord> + '_ {
        (0..self.len()).flat_map(move |i| self.heads().map(move |h| self.record(i, h)))
    }

    /// Head decisions for every sample.
    pub fn decisions(&self, head: HeadId, orientation: Orientation) -> Vec<Answer> {
        let u = head.index(self.n_heads);
        self.scores.iter().map(|row| decide_scores(row[u].0, row[u].1, orientation)).collect()
    }

    /// Keeps only the listed sample ids.
    pub fn restrict(&self, ids: &BTreeSet<String>) -> ScoreTable {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| ids.contains(&self.sample_ids[i])).collect();
        ScoreTable {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            variant: self.variant,
            dataset_digest: self.dataset_digest.clone(),
            sample_ids: keep.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            gold: keep.iter().map(|&i| self.gold[i]).collect(),
            baseline: keep.iter().map(|&i| self.baseline[i]).collect(),
            scores: keep.iter().map(|&i| self.scores[i].clone()).collect(),
        }
    }

    /// Tab-separated export, one row per (sample, head).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("sample_id\tlayer\thead\ts0\ts1\tgold\tqk_decision\tbaseline_decision\n");
        for (i, id) in self.sample_ids.iter().enumerate() {
            for head in self.heads() {
                let (s0, s1) = self.scores[i][head.index(self.n_heads)];
                let d = decide_scores(s0, s1, Orientation::Direct);
                writeln!(
                    out,
                    "{id}\t{}\t{}\t{s0:?}\t{s1:?}\t{}\t{d}\t{}",
                    head.layer, head.head, self.gold[i], self.baseline[i]
                )
                .expect("write to string");
            }
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), ProbeError> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

/// Builds the grid from captures joined to gold answers by sample id.
/// Capture order does not matter.
pub fn score_table(
    captures: &CaptureSet,
    gold: &BTreeMap<String, Answer>,
    variant: Variant,
    dataset_digest: &str,
) -> Result<ScoreTable, ProbeError> {
    let spec = &captures.spec;
    let mut by_id: BTreeMap<&str, &QKCapture> = BTreeMap::new();
    for c in &captures.captures {
        if by_id.insert(c.sample_id.as_str(), c).is_some() {
            return Err(ProbeError::IncompleteCaptures(format!("duplicate capture {}", c.sample_id)));
        }
        if !gold.contains_key(&c.sample_id) {
            return Err(ProbeError::IncompleteCaptures(format!("no gold answer for {}", c.sample_id)));
        }
    }
    if let Some(missing) = gold.keys().find(|id| !by_id.contains_key(id.as_str())) {
        return Err(ProbeError::IncompleteCaptures(format!("no capture for {missing}")));
    }
    let heads: Vec<HeadId> = spec.heads().collect();
    let rows: Vec<(Vec<(f32, f32)>, Answer)> = by_id
        .par_iter()
        .map(|(_, c)| {
            let scores =
                heads.iter().map(|&h| qk_scores(spec, c, h, variant)).collect::<Result<Vec<_>, _>>()?;
            Ok((scores, decide_baseline(c)?))
        })
        .collect::<Result<_, ProbeError>>()?;
    let sample_ids: Vec<String> = by_id.keys().map(|s| s.to_string()).collect();
    let (scores, baseline) = rows.into_iter().unzip();
    Ok(ScoreTable {
        n_layers: spec.n_layers,
        n_heads: spec.n_heads,
        variant,
        dataset_digest: dataset_digest.to_string(),
        gold: sample_ids.iter().map(|id| gold[id]).collect(),
        sample_ids,
        baseline,
        scores,
    })
}
