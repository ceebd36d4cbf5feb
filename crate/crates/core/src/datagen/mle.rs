// SPDX-License-Identifier: MIT OR Apache-2.0

//! Yes/no questions from chains of the thirteen inference schemes:
//! "If a person uses a fishing rod, they catch fish. Michael uses a fishing
//! rod." with question "Does Michael catch fish?"

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lexicon::{verb_predicate, MLE_NAMES, MLE_VERBS};
use super::{finish, Answer, Clause, DatagenError, DatasetSplit, Family, GenConfig, LogicSample, Polarity, RuleMode};
use crate::logic::{apply_rule, derive, Formula, InferenceRule, ProofSystem, StepRule, Term, DEFAULT_MAX_DEPTH};

/// Scheme names by depth; depth 1 lists every single rule.
pub const MLE_SCHEMES: [&[&str]; 4] = [
    &["MP", "MT", "HS", "DS", "CD", "DD", "BD", "CT", "DMT", "CO", "IM", "EG", "UI"],
    &["UI_MP", "MP_MP", "MT_MT", "MT_DS", "DS_MP", "CD_DS", "CT_DS"],
    &[
        "UI_MP_MP", "MP_MP_MP", "MT_MT_MT", "MT_DS_MP", "DS_MP_MP", "CD_DS_MP", "CT_DS_MP",
        "MT_MT_DS", "MP_MP_EG",
    ],
    &["UI_MP_MP_MP", "MP_MP_MP_MP", "MT_MT_MT_DS", "MT_DS_MP_MP", "CD_DS_MP_MP", "CT_DS_MP_MP", "DS_MP_MP_EG"],
];

/// Number of surface template variants.
pub const TEMPLATE_VARIANTS: usize = 4;

pub fn schemes_for_depth(depth: usize) -> &'static [&'static str] {
    MLE_SCHEMES.get(depth.wrapping_sub(1)).copied().unwrap_or(&[])
}

struct Chain {
    premises: Vec<Formula>,
    conclusion: Formula,
}

struct Symbols<'a> {
    free: Vec<&'a str>,
}

impl Symbols<'_> {
    fn next(&mut self) -> String {
        verb_predicate(self.free.pop().expect("verb lexicon is large enough"))
    }
}

fn atom(p: &str, t: &str) -> Formula {
    Formula::atom(p, t)
}

fn all(body: Formula) -> Formula {
    Formula::forall("x", body)
}

fn build_chain(tags: &[InferenceRule], syms: &mut Symbols, a: &str) -> Result<Chain, DatagenError> {
    use InferenceRule::*;
    let bad = || DatagenError::Config(format!("unsupported scheme {tags:?}"));
    let (first, rest) = tags.split_first().ok_or_else(bad)?;
    if rest.is_empty() {
        let preds: Vec<String> = (0..4).map(|_| syms.next()).collect();
        let refs: Vec<&str> = preds.iter().map(String::as_str).collect();
        let premises = first.instantiate_premises(0, &refs, a, "x");
        let conclusion = apply_rule(*first, &premises, Some(a))?;
        return Ok(Chain { premises, conclusion });
    }
    let (p, q) = (syms.next(), syms.next());
    let (mut premises, mut cur) = match first {
        UniversalInstantiation => (vec![all(atom(&p, "x"))], atom(&p, a)),
        ModusPonens => (vec![atom(&p, a), all(Formula::implies(atom(&p, "x"), atom(&q, "x")))], atom(&q, a)),
        ModusTollens => (
            vec![all(Formula::implies(atom(&p, "x"), atom(&q, "x"))), Formula::not(atom(&q, a))],
            Formula::not(atom(&p, a)),
        ),
        DisjunctiveSyllogism => (
            vec![all(Formula::or(atom(&p, "x"), atom(&q, "x"))), Formula::not(atom(&p, a))],
            atom(&q, a),
        ),
        ConstructiveDilemma => {
            let (r, s) = (syms.next(), syms.next());
            (
                vec![
                    all(Formula::and(
                        Formula::implies(atom(&p, "x"), atom(&q, "x")),
                        Formula::implies(atom(&r, "x"), atom(&s, "x")),
                    )),
                    Formula::or(atom(&p, a), atom(&r, a)),
                ],
                Formula::or(atom(&q, a), atom(&s, a)),
            )
        }
        Commutation => (
            vec![all(Formula::or(atom(&p, "x"), atom(&q, "x")))],
            all(Formula::or(atom(&q, "x"), atom(&p, "x"))),
        ),
        _ => return Err(bad()),
    };
    for tag in rest {
        cur = match (tag, &cur) {
            (ModusPonens, Formula::Atom { pred, .. }) => {
                let next = syms.next();
                premises.push(all(Formula::implies(atom(pred, "x"), atom(&next, "x"))));
                atom(&next, a)
            }
            (ModusTollens, Formula::Not(inner)) => {
                let Formula::Atom { pred, .. } = &**inner else { return Err(bad()) };
                let next = syms.next();
                premises.push(all(Formula::implies(atom(&next, "x"), atom(pred, "x"))));
                Formula::not(atom(&next, a))
            }
            (DisjunctiveSyllogism, Formula::Not(inner)) => {
                let Formula::Atom { pred, .. } = &**inner else { return Err(bad()) };
                let next = syms.next();
                premises.push(all(Formula::or(atom(pred, "x"), atom(&next, "x"))));
                atom(&next, a)
            }
            (DisjunctiveSyllogism, Formula::Or(left, right)) => {
                premises.push(Formula::not((**left).clone()));
                (**right).clone()
            }
            (DisjunctiveSyllogism, Formula::ForAll(_, body)) => {
                let Formula::Or(left, right) = &**body else { return Err(bad()) };
                let c = Term::Const(a.to_string());
                premises.push(Formula::not(left.substitute("x", &c)));
                right.substitute("x", &c)
            }
            (ExistentialGeneralization, Formula::Atom { pred, .. }) => Formula::exists("x", atom(pred, "x")),
            _ => return Err(bad()),
        };
    }
    // universal premises first, then facts about the individual
    premises.sort_by_key(|f| !matches!(f, Formula::ForAll(..)));
    Ok(Chain { premises, conclusion: cur })
}

fn verbs() -> &'static BTreeMap<String, (&'static str, &'static str)> {
    static MAP: OnceLock<BTreeMap<String, (&'static str, &'static str)>> = OnceLock::new();
    MAP.get_or_init(|| MLE_VERBS.iter().map(|&(t, b)| (verb_predicate(b), (t, b))).collect())
}

fn verb(pred: &str) -> (&'static str, &'static str) {
    verbs().get(pred).copied().unwrap_or(("", ""))
}

/// Verb phrase for a subject-free formula, third person or base form.
fn phrase(f: &Formula, third: bool) -> String {
    match f {
        Formula::Atom { pred, .. } => {
            let (t, b) = verb(pred);
            if third { t } else { b }.to_string()
        }
        Formula::Not(inner) => {
            let aux = if third { "does not" } else { "do not" };
            format!("{aux} {}", phrase(inner, false))
        }
        Formula::And(l, r) => format!("{} and {}", phrase(l, third), phrase(r, third)),
        Formula::Or(l, r) => format!("either {} or {}", phrase(l, third), phrase(r, third)),
        Formula::Implies(l, r) => {
            format!("{} only if they {}", phrase(l, third), phrase(r, false))
        }
        Formula::ForAll(..) | Formula::Exists(..) => f.to_string(),
    }
}

/// The single constant a quantifier-free ground formula talks about.
fn sole_constant(f: &Formula) -> Option<String> {
    let consts = f.constants();
    (consts.len() == 1 && f.quantifier_depth() == 0 && !contains_implication(f))
        .then(|| consts.into_iter().next().expect("one constant"))
}

fn contains_implication(f: &Formula) -> bool {
    match f {
        Formula::Implies(..) => true,
        Formula::Not(a) => contains_implication(a),
        Formula::And(a, b) | Formula::Or(a, b) => contains_implication(a) || contains_implication(b),
        _ => false,
    }
}

fn sentence(f: &Formula, variant: usize) -> String {
    if let Some(c) = sole_constant(f) {
        return format!("{c} {}", phrase(f, true));
    }
    match f {
        Formula::ForAll(_, body) => match &**body {
            Formula::Implies(a, b) if matches!(**b, Formula::Implies(..)) => {
                let Formula::Implies(b1, b2) = &**b else { unreachable!() };
                format!(
                    "if a person {}, then if they {}, they {}",
                    phrase(a, true),
                    phrase(b1, false),
                    phrase(b2, false)
                )
            }
            Formula::Implies(a, b) => match variant % TEMPLATE_VARIANTS {
                0 => format!("if a person {}, they {}", phrase(a, true), phrase(b, false)),
                1 => format!("anyone who {} {}", phrase(a, true), phrase(b, true)),
                2 => format!("everyone who {} {}", phrase(a, true), phrase(b, true)),
                _ => format!("if someone {}, then they {}", phrase(a, true), phrase(b, false)),
            },
            Formula::And(l, r) if matches!((&**l, &**r), (Formula::Implies(..), Formula::Implies(..))) => {
                let (Formula::Implies(p, q), Formula::Implies(r, s)) = (&**l, &**r) else { unreachable!() };
                let lead = ["for every person", "for anyone", "for each person", "for everyone"]
                    [variant % TEMPLATE_VARIANTS];
                format!(
                    "{lead}, if they {} then they {}, and if they {} then they {}",
                    phrase(p, false),
                    phrase(q, false),
                    phrase(r, false),
                    phrase(s, false)
                )
            }
            other => match variant % TEMPLATE_VARIANTS {
                0 => format!("everyone {}", phrase(other, true)),
                1 => format!("every person {}", phrase(other, true)),
                2 => format!("each person {}", phrase(other, true)),
                _ => format!("all people {}", phrase(other, false)),
            },
        },
        Formula::Exists(_, body) => match variant % TEMPLATE_VARIANTS {
            0 => format!("someone {}", phrase(body, true)),
            1 => format!("some person {}", phrase(body, true)),
            2 => format!("there is someone who {}", phrase(body, true)),
            _ => format!("at least one person {}", phrase(body, true)),
        },
        Formula::Not(inner) => match &**inner {
            Formula::ForAll(_, body) => format!("not everyone {}", phrase(body, true)),
            Formula::Exists(_, body) => format!("no one {}", phrase(body, true)),
            other => format!("it is not the case that {}", sentence(other, variant)),
        },
        Formula::Implies(a, b) => format!("if {}, then {}", sentence(a, variant), sentence(b, variant)),
        Formula::And(a, b) => format!("{} and {}", sentence(a, variant), sentence(b, variant)),
        Formula::Or(a, b) => format!("either {} or {}", sentence(a, variant), sentence(b, variant)),
        Formula::Atom { .. } => f.to_string(),
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

pub(crate) fn declarative(f: &Formula, variant: usize) -> String {
    format!("{}.", capitalize(&sentence(f, variant)))
}

pub(crate) fn question(f: &Formula, variant: usize) -> String {
    match f {
        Formula::Atom { pred, args } => format!("Does {} {}?", args[0].name(), verb(pred).1),
        Formula::Exists(_, body) if matches!(**body, Formula::Atom { .. }) => {
            format!("Does someone {}?", phrase(body, false))
        }
        other => format!("Is it true that {}?", sentence(other, variant)),
    }
}

fn parse_scheme(name: &str) -> Result<Vec<InferenceRule>, DatagenError> {
    name.split('_').map(|t| t.parse().map_err(DatagenError::from)).collect()
}

fn sample(config: &GenConfig, index: usize, scheme: &str, yes: bool, depth: usize) -> Result<LogicSample, DatagenError> {
    let mut rng: ChaCha8Rng = config.sample_rng(index);
    let tags = parse_scheme(scheme)?;
    let mut free: Vec<&str> = MLE_VERBS.iter().map(|v| v.1).collect();
    free.shuffle(&mut rng);
    let name = *MLE_NAMES.choose(&mut rng).expect("names");
    let chain = build_chain(&tags, &mut Symbols { free }, name)?;
    let variant = rng.gen_range(0..TEMPLATE_VARIANTS);

    let statement = if yes { chain.conclusion.clone() } else { chain.conclusion.negated() };
    let trace = derive(&chain.premises, &statement, ProofSystem::Schemes, DEFAULT_MAX_DEPTH)?;
    if trace.depth != depth {
        return Err(DatagenError::Certification {
            id: config.sample_id(index),
            reason: format!("{scheme} proves at depth {}", trace.depth),
        });
    }
    let rule_tags: BTreeSet<StepRule> = trace.steps.iter().map(|s| s.rule).collect();
    let context = chain.premises.iter().map(|f| Clause::new(declarative(f, variant), f.clone())).collect();
    Ok(LogicSample {
        id: config.sample_id(index),
        family: Family::Mle,
        depth,
        distractors: 0,
        polarity: if matches!(statement, Formula::Not(_)) { Polarity::Negative } else { Polarity::Positive },
        gold: Answer::from_truth(yes),
        context,
        statement: Clause::new(question(&statement, variant), statement),
        rule_tags,
        scheme: Some(scheme.to_string()),
        counterpart_id: None,
    })
}

pub fn gen_multilogieval(config: &GenConfig) -> Result<DatasetSplit, DatagenError> {
    config.validate()?;
    let RuleMode::Scheme { depth, schemes } = &config.rule_mode else {
        return Err(DatagenError::Config("mle needs a scheme rule mode".into()));
    };
    let known = schemes_for_depth(*depth);
    let chosen: Vec<&str> = if schemes.is_empty() {
        known.to_vec()
    } else {
        for s in schemes {
            if !known.contains(&s.as_str()) {
                return Err(DatagenError::Config(format!("{s} is not a depth-{depth} scheme")));
            }
        }
        schemes.iter().map(String::as_str).collect()
    };
    let total = config.total();
    if !total.is_multiple_of(chosen.len()) || !(total / chosen.len()).is_multiple_of(2) {
        return Err(DatagenError::Config(format!(
            "{total} samples cannot be split evenly and balanced over {} schemes",
            chosen.len()
        )));
    }
    let per = total / chosen.len();
    let samples: Vec<LogicSample> = (0..total)
        .into_par_iter()
        .map(|i| sample(config, i, chosen[i / per], (i % per).is_multiple_of(2), *depth))
        .collect::<Result<_, _>>()?;
    finish(config, samples)
}
