// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic logic QA corpora with oracle-certified gold answers.
//!
//! Three families are supported: fictional-ontology chains (`pronto`),
//! people-and-attributes rule worlds (`pararule`) and yes/no questions built
//! from the thirteen inference schemes (`mle`). Every emitted sample is checked
//! against the entailment oracle and its depth is recomputed by a prover.

mod io;
pub mod lexicon;
mod mle;
mod pararule;
mod pronto;
mod split;

use std::collections::BTreeSet;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::logic::{consistent, entails, proof_depth, Formula, LogicError, ProofSystem, StepRule, Verdict};

pub use io::{read_dataset, read_samples, write_dataset, write_samples, DatasetManifest, DATASET_VERSION};
pub use mle::{gen_multilogieval, schemes_for_depth, MLE_SCHEMES};
pub use pararule::gen_pararule;
pub use pronto::{add_distractors, gen_prontoqa, negation_counterpart};
pub use split::{split_calibration_eval, split_key};

/// Domain size used to certify gold answers.
pub const CERTIFY_DOMAIN: usize = 3;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("lexicon supplies {available} categories, {needed} needed")]
    ExhaustedOntology { needed: usize, available: usize },
    #[error("need {needed} samples of class {class}, have {available}")]
    InsufficientSamples { class: Answer, needed: usize, available: usize },
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("sample {id} failed certification: {reason}")]
    Certification { id: String, reason: String },
    #[error("no valid sample after {0} attempts")]
    Rejected(usize),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("dataset file: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset record: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Pronto,
    Pararule,
    Mle,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Pronto => "pronto",
            Family::Pararule => "pararule",
            Family::Mle => "mle",
        }
    }

    /// Prover used to recompute sample depth.
    pub fn proof_system(self) -> ProofSystem {
        match self {
            Family::Mle => ProofSystem::Schemes,
            _ => ProofSystem::Chaining,
        }
    }

    /// Option words in answer-index order.
    pub fn options(self) -> [&'static str; 2] {
        match self {
            Family::Mle => ["yes", "no"],
            _ => ["true", "false"],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Answer index: `A0` is "true"/"yes", `A1` is "false"/"no".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    A0,
    A1,
}

impl Answer {
    pub fn from_truth(holds: bool) -> Answer {
        if holds {
            Answer::A0
        } else {
            Answer::A1
        }
    }

    pub fn flipped(self) -> Answer {
        match self {
            Answer::A0 => Answer::A1,
            Answer::A1 => Answer::A0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Answer::A0 => 0,
            Answer::A1 => 1,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::A0 => "a0",
            Answer::A1 => "a1",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn flipped(self) -> Polarity {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

/// A natural-language sentence with its formula.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub text: String,
    pub formula: Formula,
}

impl Clause {
    pub fn new(text: impl Into<String>, formula: Formula) -> Self {
        Clause { text: text.into(), formula }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicSample {
    pub id: String,
    pub family: Family,
    pub depth: usize,
    pub distractors: usize,
    pub polarity: Polarity,
    pub gold: Answer,
    pub context: Vec<Clause>,
    pub statement: Clause,
    pub rule_tags: BTreeSet<StepRule>,
    /// Scheme name for `mle` samples, e.g. `MT_DS`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    pub counterpart_id: Option<String>,
}

impl LogicSample {
    pub fn context_formulas(&self) -> Vec<Formula> {
        self.context.iter().map(|c| c.formula.clone()).collect()
    }

    /// Context lines joined with spaces.
    pub fn context_text(&self) -> String {
        self.context.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RuleMode {
    MpOnly,
    Composed,
    /// Inference-scheme chains of the given depth; an empty list selects
    /// every scheme of that depth.
    Scheme { depth: usize, schemes: Vec<String> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

impl CountRange {
    pub fn exactly(n: usize) -> Self {
        CountRange { min: n, max: n }
    }

    pub fn new(min: usize, max: usize) -> Self {
        CountRange { min, max }
    }

    /// Deterministic round-robin pick for sample `index`.
    pub fn pick(&self, index: usize) -> usize {
        self.min + index % (self.max - self.min + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub family: Family,
    pub rule_mode: RuleMode,
    /// Reasoning depth (hops for `pronto`, depth for `pararule`).
    pub hops: CountRange,
    pub distractors: CountRange,
    pub n_calibration: usize,
    pub n_evaluation: usize,
    pub seed: u64,
    /// Number of pseudoword categories the ontology may draw from.
    pub category_count: usize,
}

impl GenConfig {
    pub fn new(family: Family) -> Self {
        let (rule_mode, hops) = match family {
            Family::Pronto => (RuleMode::MpOnly, CountRange::exactly(1)),
            Family::Pararule => (RuleMode::MpOnly, CountRange::exactly(2)),
            Family::Mle => (RuleMode::Scheme { depth: 1, schemes: Vec::new() }, CountRange::exactly(1)),
        };
        GenConfig {
            family,
            rule_mode,
            hops,
            distractors: CountRange::exactly(0),
            n_calibration: 600,
            n_evaluation: 1000,
            seed: 0,
            category_count: lexicon::pronto_categories().len(),
        }
    }

    pub fn total(&self) -> usize {
        self.n_calibration + self.n_evaluation
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: &str| Err(DatagenError::Config(m.to_string()));
        if !self.n_calibration.is_multiple_of(2) {
            return bad("n_calibration must be even");
        }
        if self.hops.min > self.hops.max || self.distractors.min > self.distractors.max {
            return bad("empty range");
        }
        if self.hops.min < 1 || self.hops.max > 5 {
            return bad("hops must lie within 1..=5");
        }
        if self.distractors.max > 5 {
            return bad("distractors must lie within 0..=5");
        }
        match (self.family, &self.rule_mode) {
            (Family::Pronto, RuleMode::MpOnly | RuleMode::Composed) => {}
            (Family::Pronto, _) => return bad("pronto needs mp_only or composed"),
            (Family::Pararule, _) if self.hops.min < 2 => return bad("pararule depth must lie within 2..=5"),
            (Family::Pararule, _) => {}
            (Family::Mle, RuleMode::Scheme { depth, .. }) if (1..=4).contains(depth) => {}
            (Family::Mle, _) => return bad("mle needs a scheme rule mode of depth 1..=4"),
        }
        if self.family != Family::Pronto && self.distractors.max > 0 {
            return bad("distractors are supported for pronto only");
        }
        Ok(())
    }

    /// Short digest of the config used in sample ids.
    pub fn tag(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..4])
    }

    pub(crate) fn sample_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }

    pub(crate) fn sample_id(&self, index: usize) -> String {
        format!("{}-{}-{:05}", self.family, self.tag(), index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub calibration: Vec<LogicSample>,
    pub evaluation: Vec<LogicSample>,
    pub manifest: DatasetManifest,
}

impl DatasetSplit {
    pub fn all(&self) -> impl Iterator<Item = &LogicSample> {
        self.calibration.iter().chain(&self.evaluation)
    }
}

/// Checks gold against the entailment oracle and depth against the prover.
pub fn certify(sample: &LogicSample) -> Result<(), DatagenError> {
    let fail = |reason: String| DatagenError::Certification { id: sample.id.clone(), reason };
    let context = sample.context_formulas();
    if !consistent(&context, CERTIFY_DOMAIN)? {
        return Err(fail("context is inconsistent".into()));
    }
    let want = match sample.gold {
        Answer::A0 => Verdict::Entailed,
        Answer::A1 => Verdict::NotEntailed,
    };
    let got = entails(&context, &sample.statement.formula, CERTIFY_DOMAIN)?;
    if got != want {
        return Err(fail(format!("oracle says {got:?}, gold is {}", sample.gold)));
    }
    let depth = proof_depth(&context, &sample.statement.formula, sample.family.proof_system())?;
    if depth != sample.depth {
        return Err(fail(format!("recomputed depth {depth}, recorded {}", sample.depth)));
    }
    Ok(())
}

pub(crate) fn certify_all(samples: &[LogicSample]) -> Result<(), DatagenError> {
    samples.par_iter().try_for_each(certify)
}

/// Generates and splits a dataset for any family.
pub fn generate(config: &GenConfig) -> Result<DatasetSplit, DatagenError> {
    match config.family {
        Family::Pronto => gen_prontoqa(config),
        Family::Pararule => gen_pararule(config),
        Family::Mle => gen_multilogieval(config),
    }
}

pub(crate) fn finish(config: &GenConfig, samples: Vec<LogicSample>) -> Result<DatasetSplit, DatagenError> {
    certify_all(&samples)?;
    let (calibration, evaluation) = split_calibration_eval(samples, config.n_calibration, config.seed)?;
    let manifest = DatasetManifest::new(config, &calibration, &evaluation);
    Ok(DatasetSplit { calibration, evaluation, manifest })
}
