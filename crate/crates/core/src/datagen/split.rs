// SPDX-License-Identifier: MIT OR Apache-2.0

//! Class-balanced calibration/evaluation split.
//!
//! Samples that share a (context formulas, statement formula) key, and
//! counterpart pairs, travel together as one unit so that no key crosses the
//! boundary and counterpart-balanced evaluation sets stay balanced.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Answer, DatagenError, LogicSample};

/// Identity of a sample for split hygiene: sorted context formulas plus the
/// statement formula, in canonical text form.
pub fn split_key(sample: &LogicSample) -> String {
    let mut ctx: Vec<String> = sample.context.iter().map(|c| c.formula.to_string()).collect();
    ctx.sort();
    format!("{}|{}", ctx.join(";"), sample.statement.formula)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

pub fn split_calibration_eval(
    samples: Vec<LogicSample>,
    n_cal: usize,
    seed: u64,
) -> Result<(Vec<LogicSample>, Vec<LogicSample>), DatagenError> {
    if !n_cal.is_multiple_of(2) {
        return Err(DatagenError::Config("n_calibration must be even".into()));
    }
    let quota = n_cal / 2;
    for class in [Answer::A0, Answer::A1] {
        let available = samples.iter().filter(|s| s.gold == class).count();
        if available < quota {
            return Err(DatagenError::InsufficientSamples { class, needed: quota, available });
        }
    }

    let mut parent: Vec<usize> = (0..samples.len()).collect();
    let mut by_key: BTreeMap<String, usize> = BTreeMap::new();
    let by_id: BTreeMap<&str, usize> = samples.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    for (i, s) in samples.iter().enumerate() {
        let mut link = |j: usize| {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a.max(b)] = a.min(b);
        };
        if let Some(&j) = by_key.get(&split_key(s)) {
            link(j);
        } else {
            by_key.insert(split_key(s), i);
        }
        if let Some(&j) = s.counterpart_id.as_deref().and_then(|c| by_id.get(c)) {
            link(j);
        }
    }
    let mut units: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..samples.len() {
        let root = find(&mut parent, i);
        units.entry(root).or_default().push(i);
    }
    let mut order: Vec<Vec<usize>> = units.into_values().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut in_cal = vec![false; samples.len()];
    let mut counts = [0usize; 2];
    for unit in &order {
        let mut add = [0usize; 2];
        for &i in unit {
            add[samples[i].gold.index()] += 1;
        }
        if counts[0] + add[0] <= quota && counts[1] + add[1] <= quota {
            counts[0] += add[0];
            counts[1] += add[1];
            for &i in unit {
                in_cal[i] = true;
            }
        }
    }
    if counts != [quota, quota] {
        let class = if counts[0] < quota { Answer::A0 } else { Answer::A1 };
        return Err(DatagenError::InsufficientSamples {
            class,
            needed: quota,
            available: counts[class.index()],
        });
    }
    let mut cal = Vec::with_capacity(n_cal);
    let mut eval = Vec::with_capacity(samples.len() - n_cal);
    for unit in order {
        for i in unit {
            if in_cal[i] {
                cal.push(i);
            } else {
                eval.push(i);
            }
        }
    }
    let mut slots: Vec<Option<LogicSample>> = samples.into_iter().map(Some).collect();
    let mut take = |idx: Vec<usize>| idx.into_iter().map(|i| slots[i].take().expect("each sample once")).collect();
    Ok((take(cal), take(eval)))
}
