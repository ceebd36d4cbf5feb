// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fictional-ontology chains: "Polly is a rompus. Every rompus is a wumpus.
//! Every wumpus is not opaque." with statement "Polly is opaque."

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lexicon::{plural, pronto_categories, with_article, PRONTO_ATTRIBUTES, PRONTO_NAMES};
use super::{
    finish, Answer, Clause, DatagenError, DatasetSplit, Family, GenConfig, LogicSample, Polarity,
    RuleMode,
};
use crate::logic::{derive, Formula, ProofSystem, StepRule, DEFAULT_MAX_DEPTH};

const COUNTERPART_SUFFIX: &str = ".n";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Hop {
    Mp,
    ConjMp,
    DisjMp,
    AndElim,
    OrElim,
    Contradiction,
}

impl Hop {
    fn cost(self) -> usize {
        match self {
            Hop::AndElim | Hop::OrElim => 2,
            _ => 1,
        }
    }
}

/// Literal over a category for the chain's current individual.
#[derive(Clone)]
struct Cur {
    cat: String,
    positive: bool,
}

struct Pool<'a> {
    free: Vec<&'a str>,
    available: usize,
    used: usize,
}

impl<'a> Pool<'a> {
    fn new(rng: &mut ChaCha8Rng, category_count: usize, exclude: &BTreeSet<String>) -> Self {
        let lexicon = pronto_categories();
        let available = category_count.min(lexicon.len());
        let mut free: Vec<&str> =
            lexicon[..available].iter().map(String::as_str).filter(|c| !exclude.contains(*c)).collect();
        free.shuffle(rng);
        Pool { free, available, used: exclude.len() }
    }

    fn take(&mut self) -> Result<String, DatagenError> {
        self.used += 1;
        self.free
            .pop()
            .map(str::to_string)
            .ok_or(DatagenError::ExhaustedOntology { needed: self.used, available: self.available })
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn is_category(pred: &str) -> bool {
    pronto_categories().iter().any(|c| c == pred)
}

/// "a wumpus" for categories, the bare word for attributes.
fn complement(pred: &str) -> String {
    if is_category(pred) {
        with_article(pred)
    } else {
        pred.to_string()
    }
}

fn plural_complement(pred: &str) -> String {
    if is_category(pred) {
        plural(pred)
    } else {
        pred.to_string()
    }
}

fn not(positive: bool) -> &'static str {
    if positive {
        ""
    } else {
        "not "
    }
}

/// "Every rompus is not opaque." and its surface variants.
fn universal_text(rng: &mut ChaCha8Rng, cur: &Cur, head: &str, positive: bool) -> String {
    let neg = not(positive);
    if !cur.positive {
        return format!("Everything that is not {} is {neg}{}.", with_article(&cur.cat), complement(head));
    }
    match rng.gen_range(0..3) {
        0 => format!("Every {} is {neg}{}.", cur.cat, complement(head)),
        1 => format!("Each {} is {neg}{}.", cur.cat, complement(head)),
        _ => format!("{} are {neg}{}.", capitalize(&plural(&cur.cat)), plural_complement(head)),
    }
}

fn cur_atom(cur: &Cur, var: &str) -> Formula {
    let atom = Formula::atom(&cur.cat, var);
    if cur.positive {
        atom
    } else {
        Formula::not(atom)
    }
}

fn signed(atom: Formula, positive: bool) -> Formula {
    if positive {
        atom
    } else {
        Formula::not(atom)
    }
}

fn forall(ante: Formula, cons: Formula) -> Formula {
    Formula::forall("x", Formula::implies(ante, cons))
}

/// Statement text for a ground literal about a named individual.
pub(crate) fn statement_text(formula: &Formula) -> String {
    let (atom, positive) = match formula {
        Formula::Not(inner) => (&**inner, false),
        other => (other, true),
    };
    let Formula::Atom { pred, args } = atom else {
        return formula.to_string();
    };
    format!("{} is {}{}.", args[0].name(), not(positive), complement(pred))
}

fn hop_plan(rng: &mut ChaCha8Rng, mode: &RuleMode, budget: usize) -> Vec<Hop> {
    let mut plan = Vec::new();
    let mut left = budget;
    let mut after_contradiction = false;
    while left > 0 {
        let options: Vec<Hop> = match mode {
            RuleMode::MpOnly => vec![Hop::Mp],
            _ if after_contradiction => vec![Hop::Mp],
            _ => [Hop::Mp, Hop::ConjMp, Hop::DisjMp, Hop::AndElim, Hop::OrElim, Hop::Contradiction]
                .into_iter()
                .filter(|h| h.cost() <= left)
                .collect(),
        };
        let hop = *options.choose(rng).expect("non-empty hop options");
        after_contradiction = hop == Hop::Contradiction;
        left -= hop.cost();
        plan.push(hop);
    }
    plan
}

struct Built {
    context: Vec<Clause>,
    statement: Clause,
    gold: Answer,
    polarity: Polarity,
}

fn build_chain(
    rng: &mut ChaCha8Rng,
    config: &GenConfig,
    hops: usize,
    form: Polarity,
) -> Result<Built, DatagenError> {
    let name = *PRONTO_NAMES.choose(rng).expect("names");
    let mut pool = Pool::new(rng, config.category_count, &BTreeSet::new());
    let mut attrs: Vec<&str> = PRONTO_ATTRIBUTES.to_vec();
    attrs.shuffle(rng);
    let target_attr = attrs.pop().expect("attributes");

    let mut context = Vec::new();
    let mut cur = Cur { cat: pool.take()?, positive: true };
    context.push(Clause::new(
        format!("{name} is {}.", with_article(&cur.cat)),
        Formula::atom(&cur.cat, name),
    ));

    for hop in hop_plan(rng, &config.rule_mode, hops - 1) {
        let x = cur_atom(&cur, "x");
        match hop {
            Hop::Mp => {
                let next = pool.take()?;
                let text = universal_text(rng, &cur, &next, true);
                context.push(Clause::new(text, forall(x, Formula::atom(&next, "x"))));
                cur = Cur { cat: next, positive: true };
            }
            Hop::ConjMp => {
                let extra = attrs.pop().expect("attributes");
                let next = pool.take()?;
                context.push(Clause::new(format!("{name} is {extra}."), Formula::atom(extra, name)));
                context.push(Clause::new(
                    format!("Every {} that is {extra} is {}.", cur.cat, with_article(&next)),
                    forall(Formula::and(x, Formula::atom(extra, "x")), Formula::atom(&next, "x")),
                ));
                cur = Cur { cat: next, positive: true };
            }
            Hop::DisjMp => {
                let other = pool.take()?;
                let next = pool.take()?;
                context.push(Clause::new(
                    format!(
                        "Everything that is {} or {} is {}.",
                        with_article(&cur.cat),
                        with_article(&other),
                        with_article(&next)
                    ),
                    forall(Formula::or(x, Formula::atom(&other, "x")), Formula::atom(&next, "x")),
                ));
                cur = Cur { cat: next, positive: true };
            }
            Hop::AndElim => {
                let next = pool.take()?;
                let other = pool.take()?;
                context.push(Clause::new(
                    format!("Every {} is {} and {}.", cur.cat, with_article(&next), with_article(&other)),
                    forall(x, Formula::and(Formula::atom(&next, "x"), Formula::atom(&other, "x"))),
                ));
                cur = Cur { cat: next, positive: true };
            }
            Hop::OrElim => {
                let left = pool.take()?;
                let right = pool.take()?;
                let next = pool.take()?;
                context.push(Clause::new(
                    format!("Every {} is {} or {}.", cur.cat, with_article(&left), with_article(&right)),
                    forall(x, Formula::or(Formula::atom(&left, "x"), Formula::atom(&right, "x"))),
                ));
                for branch in [&left, &right] {
                    let b = Cur { cat: branch.clone(), positive: true };
                    let text = universal_text(rng, &b, &next, true);
                    context.push(Clause::new(
                        text,
                        forall(Formula::atom(branch, "x"), Formula::atom(&next, "x")),
                    ));
                }
                cur = Cur { cat: next, positive: true };
            }
            Hop::Contradiction => {
                let other = pool.take()?;
                let o = Cur { cat: other.clone(), positive: true };
                let text = universal_text(rng, &o, &cur.cat, false);
                context.push(Clause::new(
                    text,
                    forall(Formula::atom(&other, "x"), Formula::not(Formula::atom(&cur.cat, "x"))),
                ));
                cur = Cur { cat: other, positive: false };
            }
        }
    }

    let sign = rng.gen_bool(0.5);
    let text = universal_text(rng, &cur, target_attr, sign);
    context.push(Clause::new(text, forall(cur_atom(&cur, "x"), signed(Formula::atom(target_attr, "x"), sign))));
    context.shuffle(rng);

    let positive = form == Polarity::Positive;
    let statement = signed(Formula::atom(target_attr, name), positive);
    Ok(Built {
        context,
        statement: Clause::new(statement_text(&statement), statement),
        gold: Answer::from_truth(sign == positive),
        polarity: form,
    })
}

fn rule_tags(context: &[Formula], statement: &Formula, depth: usize) -> Result<BTreeSet<StepRule>, DatagenError> {
    let trace = derive(context, statement, ProofSystem::Chaining, DEFAULT_MAX_DEPTH)?;
    if trace.depth != depth {
        return Err(DatagenError::Certification {
            id: String::new(),
            reason: format!("chain built for depth {depth} proves at depth {}", trace.depth),
        });
    }
    Ok(trace.steps.iter().map(|s| s.rule).collect())
}

fn base_sample(config: &GenConfig, index: usize) -> Result<LogicSample, DatagenError> {
    let mut rng = config.sample_rng(index);
    let hops = config.hops.pick(index);
    let form = if index.is_multiple_of(2) { Polarity::Positive } else { Polarity::Negative };
    let built = build_chain(&mut rng, config, hops, form)?;
    let context: Vec<Formula> = built.context.iter().map(|c| c.formula.clone()).collect();
    let sample = LogicSample {
        id: config.sample_id(index),
        family: Family::Pronto,
        depth: hops,
        distractors: 0,
        polarity: built.polarity,
        gold: built.gold,
        rule_tags: rule_tags(&context, &built.statement.formula, hops)?,
        context: built.context,
        statement: built.statement,
        scheme: None,
        counterpart_id: None,
    };
    let k = rng.gen_range(config.distractors.min..=config.distractors.max);
    add_distractors_from(sample, k, &mut rng, config.category_count)
}

pub fn gen_prontoqa(config: &GenConfig) -> Result<DatasetSplit, DatagenError> {
    config.validate()?;
    if config.family != Family::Pronto {
        return Err(DatagenError::Config("gen_prontoqa needs family pronto".into()));
    }
    if !config.total().is_multiple_of(2) {
        return Err(DatagenError::Config("pronto sample total must be even".into()));
    }
    let bases: Vec<LogicSample> =
        (0..config.total() / 2).into_par_iter().map(|i| base_sample(config, i)).collect::<Result<_, _>>()?;
    let mut samples = Vec::with_capacity(config.total());
    for mut base in bases {
        base.counterpart_id = Some(counterpart_id(&base.id));
        let other = negation_counterpart(&base);
        samples.push(base);
        samples.push(other);
    }
    finish(config, samples)
}

fn counterpart_id(id: &str) -> String {
    match id.strip_suffix(COUNTERPART_SUFFIX) {
        Some(base) => base.to_string(),
        None => format!("{id}{COUNTERPART_SUFFIX}"),
    }
}

/// Flips the statement's polarity and the gold answer; the context is kept.
pub fn negation_counterpart(sample: &LogicSample) -> LogicSample {
    let statement = sample.statement.formula.negated();
    LogicSample {
        id: counterpart_id(&sample.id),
        polarity: sample.polarity.flipped(),
        gold: sample.gold.flipped(),
        statement: Clause::new(statement_text(&statement), statement),
        counterpart_id: Some(sample.id.clone()),
        ..sample.clone()
    }
}

/// Inserts `k` premises about categories absent from the sample.
pub fn add_distractors(sample: &LogicSample, k: usize, seed: u64) -> Result<LogicSample, DatagenError> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_distractors_from(sample.clone(), k, &mut rng, pronto_categories().len())
}

fn add_distractors_from(
    mut sample: LogicSample,
    k: usize,
    rng: &mut ChaCha8Rng,
    category_count: usize,
) -> Result<LogicSample, DatagenError> {
    if k == 0 {
        return Ok(sample);
    }
    let mut used = BTreeSet::new();
    for c in &sample.context {
        used.extend(c.formula.predicates().into_iter().map(|p| p.name));
    }
    used.extend(sample.statement.formula.predicates().into_iter().map(|p| p.name));
    let mut pool = Pool::new(rng, category_count, &used);
    let target = sample.statement.formula.predicates().into_iter().next().map(|p| p.name);
    for _ in 0..k {
        let subject = Cur { cat: pool.take()?, positive: true };
        let clause = if rng.gen_bool(0.5) {
            let head = pool.take()?;
            Clause::new(
                universal_text(rng, &subject, &head, true),
                forall(Formula::atom(&subject.cat, "x"), Formula::atom(&head, "x")),
            )
        } else {
            let attr = match &target {
                Some(t) if rng.gen_bool(0.5) => t.clone(),
                _ => PRONTO_ATTRIBUTES.choose(rng).expect("attributes").to_string(),
            };
            let sign = rng.gen_bool(0.5);
            Clause::new(
                universal_text(rng, &subject, &attr, sign),
                forall(Formula::atom(&subject.cat, "x"), signed(Formula::atom(&attr, "x"), sign)),
            )
        };
        let at = rng.gen_range(0..=sample.context.len());
        sample.context.insert(at, clause);
    }
    sample.distractors += k;
    Ok(sample)
}
