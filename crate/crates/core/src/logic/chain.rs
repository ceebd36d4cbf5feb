// SPDX-License-Identifier: MIT OR Apache-2.0

//! Derivation depth.
//!
//! Depth is the height of the shallowest derivation: facts sit at depth 0 and
//! a rule application sits one above its deepest premise. All provers here
//! saturate in rounds, so a formula first produced in round `r` has depth `r`.
//!
//! * [`forward_chain`] covers the Horn fragment (ground literals plus
//!   `forall x (p1(x) & .. & pn(x) -> l(x))` with positive antecedents).
//! * [`ProofSystem::Chaining`] extends it with conjunction/disjunction
//!   elimination, antecedents built from `and`/`or`, proof by contradiction,
//!   and goal-directed introductions. Horn theories are delegated to
//!   [`forward_chain`].
//! * [`ProofSystem::Schemes`] saturates with the thirteen inference schemes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::formula::{Formula, Term};
use super::rules::{conclude, for_each_match, InferenceRule};
use super::LogicError;

pub const DEFAULT_MAX_DEPTH: usize = 12;

/// A single derivation step kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepRule {
    Scheme(InferenceRule),
    AndIntro,
    AndElim,
    OrIntro,
    OrElim,
    Contradiction,
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepRule::Scheme(r) => f.write_str(r.tag()),
            StepRule::AndIntro => f.write_str("AND_INTRO"),
            StepRule::AndElim => f.write_str("AND_ELIM"),
            StepRule::OrIntro => f.write_str("OR_INTRO"),
            StepRule::OrElim => f.write_str("OR_ELIM"),
            StepRule::Contradiction => f.write_str("CONTRADICTION"),
        }
    }
}

impl FromStr for StepRule {
    type Err = LogicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "AND_INTRO" => StepRule::AndIntro,
            "AND_ELIM" => StepRule::AndElim,
            "OR_INTRO" => StepRule::OrIntro,
            "OR_ELIM" => StepRule::OrElim,
            "CONTRADICTION" => StepRule::Contradiction,
            other => StepRule::Scheme(other.parse()?),
        })
    }
}

impl Serialize for StepRule {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for StepRule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProofSystem {
    Chaining,
    Schemes,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub rule: StepRule,
    /// Indices below the theory length point at theory members, the rest at
    /// earlier steps (offset by the theory length).
    pub premises: Vec<usize>,
    pub formula: Formula,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationTrace {
    pub steps: Vec<TraceStep>,
    pub depth: usize,
    /// The formula actually derived: the statement or its negation.
    pub target: Formula,
    pub negated: bool,
}

#[derive(Clone, Debug)]
enum Just {
    Given(usize),
    Step(StepRule, Vec<Formula>),
}

#[derive(Default)]
struct Known {
    map: BTreeMap<Formula, (usize, Just)>,
    order: Vec<Formula>,
}

impl Known {
    fn from_theory(theory: &[Formula]) -> Self {
        let mut k = Known::default();
        for (i, f) in theory.iter().enumerate() {
            if !k.map.contains_key(f) {
                k.map.insert(f.clone(), (0, Just::Given(i)));
                k.order.push(f.clone());
            }
        }
        k
    }

    fn contains(&self, f: &Formula) -> bool {
        self.map.contains_key(f)
    }

    fn depth(&self, f: &Formula) -> Option<usize> {
        self.map.get(f).map(|(d, _)| *d)
    }

    /// Adds a round's candidates; returns how many were new.
    fn commit(&mut self, round: usize, candidates: Vec<(Formula, StepRule, Vec<Formula>)>) -> usize {
        let mut added = 0;
        for (f, rule, premises) in candidates {
            if self.map.contains_key(&f) {
                continue;
            }
            self.map.insert(f.clone(), (round, Just::Step(rule, premises)));
            self.order.push(f);
            added += 1;
        }
        added
    }

    fn trace(&self, target: &Formula, theory_len: usize, negated: bool) -> DerivationTrace {
        fn visit(
            known: &Known,
            f: &Formula,
            theory_len: usize,
            index: &mut BTreeMap<Formula, usize>,
            steps: &mut Vec<TraceStep>,
        ) -> usize {
            if let Some(&i) = index.get(f) {
                return i;
            }
            let (_, just) = &known.map[f];
            let i = match just {
                Just::Given(i) => *i,
                Just::Step(rule, premises) => {
                    let idx = premises
                        .iter()
                        .map(|p| visit(known, p, theory_len, index, steps))
                        .collect();
                    steps.push(TraceStep { rule: *rule, premises: idx, formula: f.clone() });
                    theory_len + steps.len() - 1
                }
            };
            index.insert(f.clone(), i);
            i
        }
        let mut steps = Vec::new();
        visit(self, target, theory_len, &mut BTreeMap::new(), &mut steps);
        DerivationTrace {
            steps,
            depth: self.depth(target).unwrap_or(0),
            target: target.clone(),
            negated,
        }
    }
}

fn theory_constants(theory: &[Formula], extra: Option<&Formula>) -> Vec<Term> {
    let mut out = BTreeSet::new();
    for f in theory.iter().chain(extra) {
        out.extend(f.constants());
    }
    out.into_iter().map(Term::Const).collect()
}

struct HornRule {
    source: Formula,
    var: String,
    body: Vec<Formula>,
    head: Formula,
}

fn conjuncts(f: &Formula, out: &mut Vec<Formula>) {
    match f {
        Formula::And(a, b) => {
            conjuncts(a, out);
            conjuncts(b, out);
        }
        other => out.push(other.clone()),
    }
}

fn horn_rule(f: &Formula) -> Option<HornRule> {
    let Formula::ForAll(var, body) = f else { return None };
    let Formula::Implies(ante, head) = &**body else { return None };
    let mut parts = Vec::new();
    conjuncts(ante, &mut parts);
    let over_var = |g: &Formula| match g {
        Formula::Atom { args, .. } => args.len() == 1 && args[0] == Term::Var(var.clone()),
        Formula::Not(inner) => match &**inner {
            Formula::Atom { args, .. } => args.len() == 1 && args[0] == Term::Var(var.clone()),
            _ => false,
        },
        _ => false,
    };
    let positive = parts.iter().all(|p| matches!(p, Formula::Atom { .. }) && over_var(p));
    if !positive || !head.is_literal() || !over_var(head) {
        return None;
    }
    Some(HornRule { source: f.clone(), var: var.clone(), body: parts, head: (**head).clone() })
}

fn is_ground_literal(f: &Formula) -> bool {
    f.is_literal() && f.free_vars().is_empty()
}

/// True when every member is a ground literal or a Horn implication.
pub fn is_horn(theory: &[Formula]) -> bool {
    theory.iter().all(|f| is_ground_literal(f) || horn_rule(f).is_some())
}

fn saturate_horn(theory: &[Formula], max_depth: usize) -> Result<Known, LogicError> {
    let mut rules = Vec::new();
    for (index, f) in theory.iter().enumerate() {
        f.check_closed()?;
        if is_ground_literal(f) {
            continue;
        }
        match horn_rule(f) {
            Some(r) => rules.push(r),
            None => {
                return Err(LogicError::FragmentViolation { index, formula: f.to_string() })
            }
        }
    }
    let consts = theory_constants(theory, None);
    let mut known = Known::from_theory(theory);
    for round in 1..=max_depth {
        let mut candidates = Vec::new();
        for rule in &rules {
            for c in &consts {
                let body: Vec<Formula> = rule.body.iter().map(|b| b.substitute(&rule.var, c)).collect();
                if !body.iter().all(|b| known.contains(b)) {
                    continue;
                }
                let head = rule.head.substitute(&rule.var, c);
                if known.contains(&head) {
                    continue;
                }
                let mut premises = vec![rule.source.clone()];
                premises.extend(body);
                candidates.push((head, StepRule::Scheme(InferenceRule::ModusPonens), premises));
            }
        }
        if known.commit(round, candidates) == 0 {
            break;
        }
    }
    Ok(known)
}

/// Every ground literal derivable from a Horn theory within `max_depth`
/// rounds, with its minimal derivation depth. Facts have depth 0.
pub fn forward_chain(
    theory: &[Formula],
    max_depth: usize,
) -> Result<BTreeMap<Formula, usize>, LogicError> {
    let known = saturate_horn(theory, max_depth)?;
    Ok(known
        .map
        .into_iter()
        .filter(|(f, _)| is_ground_literal(f))
        .map(|(f, (d, _))| (f, d))
        .collect())
}

struct Implication {
    source: Formula,
    var: String,
    ante: Formula,
    cons: Formula,
}

fn subformulas(f: &Formula, out: &mut BTreeSet<Formula>) {
    out.insert(f.clone());
    match f {
        Formula::Not(a) => subformulas(a, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            subformulas(a, out);
            subformulas(b, out);
        }
        _ => {}
    }
}

/// Premises witnessing that `f` holds given `known`, if any.
fn satisfied(known: &Known, f: &Formula) -> Option<Vec<Formula>> {
    if known.contains(f) {
        return Some(vec![f.clone()]);
    }
    match f {
        Formula::And(a, b) => {
            let mut left = satisfied(known, a)?;
            left.extend(satisfied(known, b)?);
            Some(left)
        }
        Formula::Or(a, b) => satisfied(known, a).or_else(|| satisfied(known, b)),
        _ => None,
    }
}

fn saturate_natural(
    theory: &[Formula],
    goal: &Formula,
    max_depth: usize,
) -> Result<Known, LogicError> {
    let mut rules = Vec::new();
    for f in theory {
        f.check_closed()?;
        if let Formula::ForAll(var, body) = f {
            if let Formula::Implies(a, c) = &**body {
                if a.quantifier_depth() == 0 && c.quantifier_depth() == 0 {
                    rules.push(Implication {
                        source: f.clone(),
                        var: var.clone(),
                        ante: (**a).clone(),
                        cons: (**c).clone(),
                    });
                }
            }
        }
    }
    let consts = theory_constants(theory, Some(goal));
    let mut closure = BTreeSet::new();
    subformulas(goal, &mut closure);
    subformulas(&goal.negated(), &mut closure);
    let closure: Vec<Formula> = closure.into_iter().filter(|f| f.is_ground()).collect();

    let mut known = Known::from_theory(theory);
    for round in 1..=max_depth {
        if known.contains(goal) || known.contains(&goal.negated()) {
            break;
        }
        let mut candidates = Vec::new();
        let mut push = |f: Formula, rule: StepRule, premises: Vec<Formula>| {
            candidates.push((f, rule, premises));
        };
        for rule in &rules {
            for c in &consts {
                let ante = rule.ante.substitute(&rule.var, c);
                if let Some(used) = satisfied(&known, &ante) {
                    let cons = rule.cons.substitute(&rule.var, c);
                    if !known.contains(&cons) {
                        let mut premises = vec![rule.source.clone()];
                        premises.extend(used);
                        push(cons, StepRule::Scheme(InferenceRule::ModusPonens), premises);
                    }
                }
                if rule.ante.is_literal() && rule.cons.is_literal() {
                    let denied = rule.cons.substitute(&rule.var, c).negated();
                    if known.contains(&denied) {
                        let out = ante.negated();
                        if !known.contains(&out) {
                            push(out, StepRule::Contradiction, vec![rule.source.clone(), denied]);
                        }
                    }
                }
            }
        }
        for f in &known.order {
            match f {
                Formula::And(a, b) if f.is_ground() => {
                    for part in [a, b] {
                        if !known.contains(part) {
                            push((**part).clone(), StepRule::AndElim, vec![f.clone()]);
                        }
                    }
                }
                Formula::Or(a, b) if f.is_ground() => {
                    for r1 in &rules {
                        for r2 in &rules {
                            if r1.source == r2.source {
                                continue;
                            }
                            for c in &consts {
                                if r1.ante.substitute(&r1.var, c) != **a
                                    || r2.ante.substitute(&r2.var, c) != **b
                                {
                                    continue;
                                }
                                let out = r1.cons.substitute(&r1.var, c);
                                if out == r2.cons.substitute(&r2.var, c) && !known.contains(&out) {
                                    push(
                                        out,
                                        StepRule::OrElim,
                                        vec![f.clone(), r1.source.clone(), r2.source.clone()],
                                    );
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        for s in &closure {
            if known.contains(s) {
                continue;
            }
            match s {
                Formula::And(a, b) if known.contains(a) && known.contains(b) => {
                    push(s.clone(), StepRule::AndIntro, vec![(**a).clone(), (**b).clone()]);
                }
                Formula::Or(a, b) => {
                    if let Some(p) = [a, b].into_iter().find(|p| known.contains(p)) {
                        push(s.clone(), StepRule::OrIntro, vec![(**p).clone()]);
                    }
                }
                _ => {}
            }
        }
        if known.commit(round, candidates) == 0 {
            break;
        }
    }
    Ok(known)
}

fn saturate_schemes(
    theory: &[Formula],
    goal: &Formula,
    max_depth: usize,
) -> Result<Known, LogicError> {
    for f in theory {
        f.check_closed()?;
    }
    let consts: Vec<String> =
        theory_constants(theory, Some(goal)).into_iter().map(|t| t.name().to_string()).collect();
    let mut known = Known::from_theory(theory);
    for round in 1..=max_depth {
        if known.contains(goal) || known.contains(&goal.negated()) {
            break;
        }
        let pool: Vec<&Formula> = known.order.iter().collect();
        let depths: Vec<usize> = pool.iter().map(|f| known.depth(f).unwrap_or(0)).collect();
        let mut candidates: Vec<(Formula, StepRule, Vec<Formula>)> = Vec::new();
        let mut seen: BTreeSet<Formula> = BTreeSet::new();
        for rule in InferenceRule::ALL {
            for form in rule.premise_forms() {
                for_each_match(form, &pool, &mut |m, used| {
                    // semi-naive: one premise must come from the previous round
                    if !used.iter().any(|&i| depths[i] + 1 == round) {
                        return true;
                    }
                    let premises: Vec<Formula> = used.iter().map(|&i| pool[i].clone()).collect();
                    let outs: Vec<Formula> = if rule.needs_constant() && m.constant().is_none() {
                        consts.iter().filter_map(|c| conclude(rule, m, Some(c)).ok()).collect()
                    } else {
                        conclude(rule, m, None).into_iter().collect()
                    };
                    for out in outs {
                        if !known.contains(&out) && seen.insert(out.clone()) {
                            candidates.push((out, StepRule::Scheme(rule), premises.clone()));
                        }
                    }
                    true
                });
            }
        }
        if known.commit(round, candidates) == 0 {
            break;
        }
    }
    Ok(known)
}

/// Shallowest derivation of `statement` or of its negation.
pub fn derive(
    theory: &[Formula],
    statement: &Formula,
    system: ProofSystem,
    max_depth: usize,
) -> Result<DerivationTrace, LogicError> {
    let known = match system {
        ProofSystem::Chaining if is_horn(theory) => saturate_horn(theory, max_depth)?,
        ProofSystem::Chaining => saturate_natural(theory, statement, max_depth)?,
        ProofSystem::Schemes => saturate_schemes(theory, statement, max_depth)?,
    };
    let negation = statement.negated();
    let pick = match (known.depth(statement), known.depth(&negation)) {
        (Some(a), Some(b)) if b < a => Some((&negation, true)),
        (Some(_), _) => Some((statement, false)),
        (None, Some(_)) => Some((&negation, true)),
        (None, None) => None,
    };
    match pick {
        Some((target, negated)) => Ok(known.trace(target, theory.len(), negated)),
        None => Err(LogicError::NotDerivable(statement.to_string())),
    }
}

/// Minimal chained-rule count needed to derive `statement` or its negation.
pub fn proof_depth(
    theory: &[Formula],
    statement: &Formula,
    system: ProofSystem,
) -> Result<usize, LogicError> {
    derive(theory, statement, system, DEFAULT_MAX_DEPTH).map(|t| t.depth)
}
