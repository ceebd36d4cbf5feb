// SPDX-License-Identifier: MIT OR Apache-2.0

//! People-and-attributes rule worlds with a statement of fixed depth.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lexicon::{PARARULE_ATTRIBUTES, PARARULE_NAMES};
use super::{finish, Answer, Clause, DatagenError, DatasetSplit, Family, GenConfig, LogicSample, Polarity};
use crate::logic::{derive, Formula, ProofSystem, StepRule, DEFAULT_MAX_DEPTH};

const PEOPLE: usize = 4;
const MAX_ATTEMPTS: usize = 64;

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn signed(f: Formula, positive: bool) -> Formula {
    if positive {
        f
    } else {
        Formula::not(f)
    }
}

fn rule(rng: &mut ChaCha8Rng, body: &[&str], head: &str, positive: bool) -> Clause {
    let neg = if positive { "" } else { "not " };
    let ante = body.iter().map(|b| Formula::atom(b, "x")).reduce(Formula::and).expect("non-empty body");
    let formula = Formula::forall("x", Formula::implies(ante, signed(Formula::atom(head, "x"), positive)));
    let text = match body {
        [one] if rng.gen_bool(0.5) => format!("All {one} people are {neg}{head}."),
        [one] => format!("{} people are {neg}{head}.", capitalize(one)),
        [a, b] => format!("If someone is {a} and {b} then they are {neg}{head}."),
        _ => unreachable!("bodies have one or two attributes"),
    };
    Clause::new(text, formula)
}

fn fact(name: &str, attr: &str) -> Clause {
    Clause::new(format!("{name} is {attr}."), Formula::atom(attr, name))
}

pub(crate) fn statement_text(formula: &Formula) -> String {
    match formula {
        Formula::Not(inner) => match &**inner {
            Formula::Atom { pred, args } => format!("{} is not {pred}.", args[0].name()),
            _ => formula.to_string(),
        },
        Formula::Atom { pred, args } => format!("{} is {pred}.", args[0].name()),
        _ => formula.to_string(),
    }
}

struct World {
    context: Vec<Clause>,
    statement: Formula,
}

fn build_world(rng: &mut ChaCha8Rng, depth: usize, gold: Answer, form: Polarity) -> World {
    let mut names = PARARULE_NAMES.to_vec();
    names.shuffle(rng);
    let people = &names[..PEOPLE];
    let target = people[0];
    let mut attrs = PARARULE_ATTRIBUTES.to_vec();
    attrs.shuffle(rng);
    let (chain, rest) = attrs.split_at(depth + 1);
    let (extras, noise) = rest.split_at(depth);
    let noise = &noise[..8];

    let positive_form = form == Polarity::Positive;
    let sign = (gold == Answer::A0) == positive_form;

    let mut facts: Vec<Vec<Clause>> = vec![Vec::new(); PEOPLE];
    let mut rules = Vec::new();
    facts[0].push(fact(target, chain[0]));
    for i in 0..depth {
        let positive = i + 1 < depth || sign;
        if rng.gen_bool(0.4) {
            facts[0].push(fact(target, extras[i]));
            rules.push(rule(rng, &[chain[i], extras[i]], chain[i + 1], positive));
        } else {
            rules.push(rule(rng, &[chain[i]], chain[i + 1], positive));
        }
    }
    if rng.gen_bool(0.5) {
        facts[0].push(fact(target, noise[0]));
    }
    for (p, person_facts) in facts.iter_mut().enumerate().skip(1) {
        let mut picks: Vec<&str> = noise.to_vec();
        picks.shuffle(rng);
        let n = rng.gen_range(2..=3);
        person_facts.extend(picks[..n].iter().map(|a| fact(people[p], a)));
    }
    for _ in 0..rng.gen_range(2..=4) {
        let mut picks: Vec<&str> = noise.to_vec();
        picks.shuffle(rng);
        let body_len = rng.gen_range(1..=2);
        rules.push(rule(rng, &picks[..body_len], picks[body_len], true));
    }

    facts.shuffle(rng);
    rules.shuffle(rng);
    let mut context: Vec<Clause> = facts.into_iter().flatten().collect();
    context.extend(rules);
    World { context, statement: signed(Formula::atom(chain[depth], target), positive_form) }
}

fn sample(config: &GenConfig, index: usize) -> Result<LogicSample, DatagenError> {
    let mut rng = config.sample_rng(index);
    let depth = config.hops.pick(index);
    let gold = if index.is_multiple_of(2) { Answer::A0 } else { Answer::A1 };
    let form = if (index / 2).is_multiple_of(2) { Polarity::Positive } else { Polarity::Negative };
    for _ in 0..MAX_ATTEMPTS {
        let world = build_world(&mut rng, depth, gold, form);
        let formulas: Vec<Formula> = world.context.iter().map(|c| c.formula.clone()).collect();
        // a statement already stated as a fact has depth 0 and is rejected
        let Ok(trace) = derive(&formulas, &world.statement, ProofSystem::Chaining, DEFAULT_MAX_DEPTH) else {
            continue;
        };
        if trace.depth != depth {
            continue;
        }
        let rule_tags: BTreeSet<StepRule> = trace.steps.iter().map(|s| s.rule).collect();
        return Ok(LogicSample {
            id: config.sample_id(index),
            family: Family::Pararule,
            depth,
            distractors: 0,
            polarity: form,
            gold,
            context: world.context,
            statement: Clause::new(statement_text(&world.statement), world.statement),
            rule_tags,
            scheme: None,
            counterpart_id: None,
        });
    }
    Err(DatagenError::Rejected(MAX_ATTEMPTS))
}

pub fn gen_pararule(config: &GenConfig) -> Result<DatasetSplit, DatagenError> {
    config.validate()?;
    if config.family != Family::Pararule {
        return Err(DatagenError::Config("gen_pararule needs family pararule".into()));
    }
    let samples: Vec<LogicSample> =
        (0..config.total()).into_par_iter().map(|i| sample(config, i)).collect::<Result<_, _>>()?;
    finish(config, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{certify, CountRange};
    use crate::logic::proof_depth;

    #[test]
    fn harry_world_has_depth_two() {
        let text = [
            "(atom strong Harry)",
            "(atom big Harry)",
            "(atom thin Anne)",
            "(atom little Anne)",
            "forall x (imp (atom strong x) (atom smart x))",
            "forall x (imp (and (atom thin x) (atom little x)) (atom short x))",
            "forall x (imp (atom short x) (atom small x))",
            "forall x (imp (atom smart x) (atom quiet x))",
        ];
        let theory: Vec<Formula> = text.iter().map(|t| t.parse().unwrap()).collect();
        let quiet = Formula::atom("quiet", "Harry");
        assert_eq!(proof_depth(&theory, &quiet, ProofSystem::Chaining), Ok(2));
        assert_eq!(statement_text(&quiet), "Harry is quiet.");
        // a stated fact sits at depth 0, which no depth-2 sample may use
        let strong = Formula::atom("strong", "Harry");
        assert_eq!(proof_depth(&theory, &strong, ProofSystem::Chaining), Ok(0));
    }

    #[test]
    fn samples_certify_at_each_depth() {
        for depth in 2..=5 {
            let mut c = GenConfig::new(Family::Pararule);
            c.hops = CountRange::exactly(depth);
            for i in 0..24 {
                let s = sample(&c, i).unwrap();
                assert_eq!(s.depth, depth);
                certify(&s).unwrap();
            }
        }
    }

    #[test]
    fn rule_texts() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = rule(&mut rng, &["thin", "little"], "short", true);
        assert_eq!(r.text, "If someone is thin and little then they are short.");
        let n = rule(&mut rng, &["smart"], "quiet", false);
        assert!(n.text.ends_with("people are not quiet."), "{}", n.text);
    }
}
