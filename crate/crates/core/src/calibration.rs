// SPDX-License-Identifier: MIT OR Apache-2.0

//! Head ranking on a calibration split, best-head and cover selection, and
//! orientation detection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{CountRange, Family, GenConfig, RuleMode};
use crate::probe::{Orientation, ScoreTable};
use crate::runtime::{HeadId, Variant};

/// Below this many calibration samples head rankings get noisy.
pub const MIN_CALIBRATION_SAMPLES: usize = 400;
pub const DEFAULT_POOL_SIZE: usize = 10;
pub const DEFAULT_COVER_SIZE: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("score table has no samples")]
    EmptyTable,
    #[error("cover of {k} heads requested but only {available} distinct pool heads exist")]
    InsufficientHeads { k: usize, available: usize },
    #[error("no calibration reports given")]
    NoReports,
    #[error("invalid head override: {0}")]
    BadOverride(String),
}

/// Identifies one experimental setup (a row group / column of a report).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SetupDescriptor {
    pub name: String,
    pub family: Family,
    pub rule_mode: String,
    /// Single depth or an inclusive `min-max` range.
    pub depth: String,
    pub distractors: String,
}

fn range_label(r: &CountRange) -> String {
    if r.min == r.max {
        r.min.to_string()
    } else {
        format!("{}-{}", r.min, r.max)
    }
}

impl SetupDescriptor {
    pub fn from_config(config: &GenConfig) -> Self {
        let (rule_mode, depth) = match &config.rule_mode {
            RuleMode::MpOnly => ("mp_only".to_string(), range_label(&config.hops)),
            RuleMode::Composed => ("composed".to_string(), range_label(&config.hops)),
            RuleMode::Scheme { depth, schemes } if schemes.is_empty() => ("scheme".to_string(), depth.to_string()),
            RuleMode::Scheme { depth, schemes } => (format!("scheme:{}", schemes.join("+")), depth.to_string()),
        };
        let distractors = range_label(&config.distractors);
        let name = format!("{}/{rule_mode}/d{depth}/x{distractors}", config.family);
        SetupDescriptor { name, family: config.family, rule_mode, depth, distractors }
    }
}

impl fmt::Display for SetupDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Exact hit count over a split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// Accuracy of the same decisions flipped.
    pub fn flipped(&self) -> Accuracy {
        Accuracy { correct: self.total - self.correct, total: self.total }
    }
}

pub fn detect_orientation(accuracy: f64, threshold: f64) -> Orientation {
    if accuracy < threshold {
        Orientation::Reversed
    } else {
        Orientation::Direct
    }
}

/// Direct-orientation accuracy of every head.
pub fn head_accuracy(table: &ScoreTable) -> Result<BTreeMap<HeadId, Accuracy>, CalibrationError> {
    if table.is_empty() {
        return Err(CalibrationError::EmptyTable);
    }
    let heads: Vec<HeadId> = table.heads().collect();
    Ok(heads
        .par_iter()
        .map(|&h| {
            let correct = table.decisions(h, Orientation::Direct).iter().zip(&table.gold).filter(|(d, g)| d == g).count();
            (h, Accuracy { correct, total: table.len() })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadCalibration {
    pub head: HeadId,
    pub rank: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Accuracy after flipping, `1 - accuracy`.
    pub flipped_accuracy: f64,
    pub orientation: Orientation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub setup: SetupDescriptor,
    pub variant: Variant,
    pub dataset_digest: String,
    pub n_samples: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Ranked: accuracy descending, then (layer, head) ascending.
    pub heads: Vec<HeadCalibration>,
    pub best_head: HeadId,
    pub top: Vec<HeadId>,
    pub warnings: Vec<String>,
}

impl CalibrationReport {
    pub fn accuracy_of(&self, head: HeadId) -> Option<f64> {
        self.heads.iter().find(|h| h.head == head).map(|h| h.accuracy)
    }

    /// Raw accuracies laid out `[layer][head]`.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; self.n_heads]; self.n_layers];
        for h in &self.heads {
            g[h.head.layer][h.head.head] = h.accuracy;
        }
        g
    }

    /// Tab-separated `head, accuracy, flipped, rank, orientation` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("layer\thead\taccuracy\tflipped_accuracy\trank\torientation\n");
        for h in &self.heads {
            let o = match h.orientation {
                Orientation::Direct => "direct",
                Orientation::Reversed => "reversed",
            };
            writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{}\t{o}",
                h.head.layer, h.head.head, h.accuracy, h.flipped_accuracy, h.rank
            )
            .expect("write to string");
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "setup": self.setup,
            "variant": self.variant,
            "n_samples": self.n_samples,
            "best_head": self.best_head.to_string(),
            "top": self.top.iter().map(|h| h.to_string()).collect::<Vec<_>>(),
            "warnings": self.warnings,
        })
    }
}

pub fn calibrate(
    table: &ScoreTable,
    setup: SetupDescriptor,
    pool_size: usize,
) -> Result<CalibrationReport, CalibrationError> {
    let acc = head_accuracy(table)?;
    let mut ranked: Vec<(HeadId, Accuracy)> = acc.into_iter().collect();
    // Same denominator everywhere, so counts order exactly like accuracies.
    ranked.sort_by(|(ha, a), (hb, b)| b.correct.cmp(&a.correct).then(ha.cmp(hb)));
    let heads: Vec<HeadCalibration> = ranked
        .iter()
        .enumerate()
        .map(|(i, (head, a))| {
            let accuracy = a.value();
            HeadCalibration {
                head: *head,
                rank: i + 1,
                correct: a.correct,
                accuracy,
                flipped_accuracy: 1.0 - accuracy,
                orientation: detect_orientation(accuracy, 0.5),
            }
        })
        .collect();
    let mut warnings = Vec::new();
    if table.len() < MIN_CALIBRATION_SAMPLES {
        let w = format!(
            "{}: {} calibration samples is below the recommended {MIN_CALIBRATION_SAMPLES}",
            setup.name,
            table.len()
        );
        log::warn!("{w}");
        warnings.push(w);
    }
    Ok(CalibrationReport {
        best_head: heads[0].head,
        top: heads.iter().take(pool_size).map(|h| h.head).collect(),
        setup,
        variant: table.variant,
        dataset_digest: table.dataset_digest.clone(),
        n_samples: table.len(),
        n_layers: table.n_layers,
        n_heads: table.n_heads,
        heads,
        warnings,
    })
}

pub fn select_best_head(report: &CalibrationReport) -> HeadId {
    report.best_head
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadCover {
    pub heads: Vec<HeadId>,
    /// Setup names where each chosen head is in the top pool.
    #[serde(with = "pairs")]
    pub coverage: BTreeMap<HeadId, BTreeSet<String>>,
}

/// Head-keyed maps as `[[head, value], ...]`, since JSON keys must be strings.
mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::runtime::HeadId;

    pub fn serialize<V: Serialize, S: Serializer>(m: &BTreeMap<HeadId, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<HeadId, V>, D::Error> {
        Ok(Vec::<(HeadId, V)>::deserialize(d)?.into_iter().collect())
    }
}

impl HeadCover {
    /// Number of distinct setups covered by the chosen heads.
    pub fn covered(&self) -> usize {
        self.coverage.values().flatten().collect::<BTreeSet<_>>().len()
    }
}

fn pool_membership(reports: &[CalibrationReport]) -> BTreeMap<HeadId, BTreeSet<String>> {
    let mut m: BTreeMap<HeadId, BTreeSet<String>> = BTreeMap::new();
    for r in reports {
        for h in &r.top {
            m.entry(*h).or_default().insert(r.setup.name.clone());
        }
    }
    m
}

fn mean_accuracy(reports: &[CalibrationReport], head: HeadId) -> f64 {
    let vals: Vec<f64> = reports.iter().filter_map(|r| r.accuracy_of(head)).collect();
    vals.iter().sum::<f64>() / vals.len().max(1) as f64
}

/// Greedy maximum coverage over the setups' top pools: each step takes the
/// head in the most still-uncovered pools, ties to higher mean accuracy,
/// then lower (layer, head).
pub fn select_cover_heads(reports: &[CalibrationReport], k: usize) -> Result<HeadCover, CalibrationError> {
    if reports.is_empty() {
        return Err(CalibrationError::NoReports);
    }
    let pools = pool_membership(reports);
    if pools.len() < k {
        return Err(CalibrationError::InsufficientHeads { k, available: pools.len() });
    }
    let means: BTreeMap<HeadId, f64> = pools.keys().map(|&h| (h, mean_accuracy(reports, h))).collect();
    let mut uncovered: BTreeSet<String> = reports.iter().map(|r| r.setup.name.clone()).collect();
    let mut chosen: Vec<HeadId> = Vec::with_capacity(k);
    for _ in 0..k {
        let best = pools
            .iter()
            .filter(|(h, _)| !chosen.contains(h))
            .map(|(h, setups)| (*h, setups.intersection(&uncovered).count()))
            .max_by(|(ha, ca), (hb, cb)| {
                ca.cmp(cb).then(means[ha].total_cmp(&means[hb])).then(hb.cmp(ha))
            })
            .map(|(h, _)| h)
            .expect("pool has more than k heads");
        for s in &pools[&best] {
            uncovered.remove(s);
        }
        chosen.push(best);
    }
    let coverage = chosen.iter().map(|h| (*h, pools[h].clone())).collect();
    Ok(HeadCover { heads: chosen, coverage })
}

/// A hand-picked cover; heads need not come from the pools.
pub fn manual_cover(reports: &[CalibrationReport], heads: &[HeadId]) -> Result<HeadCover, CalibrationError> {
    let distinct: BTreeSet<&HeadId> = heads.iter().collect();
    if distinct.len() != heads.len() || heads.is_empty() {
        return Err(CalibrationError::BadOverride(format!("{} heads, {} distinct", heads.len(), distinct.len())));
    }
    if let Some(r) = reports.first() {
        if let Some(h) = heads.iter().find(|h| h.layer >= r.n_layers || h.head >= r.n_heads) {
            return Err(CalibrationError::BadOverride(format!("head {h} out of range")));
        }
    }
    let pools = pool_membership(reports);
    let coverage = heads.iter().map(|h| (*h, pools.get(h).cloned().unwrap_or_default())).collect();
    Ok(HeadCover { heads: heads.to_vec(), coverage })
}
