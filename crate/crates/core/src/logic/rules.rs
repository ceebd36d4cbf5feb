// SPDX-License-Identifier: MIT OR Apache-2.0

//! The thirteen single-step inference schemes and schema unification.
//!
//! Each scheme has one or more premise forms. The first form is the tabulated
//! one; the others split a quantified conjunction into separate quantified
//! premises (HS, CD, DD, BD, CO) or accept a ground disjunction (DS).
//! Placeholders `$p $q $r $s` range over distinct predicates, `$a` over
//! constants and `$x` over the bound variable of one premise.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::formula::{is_variable_name, Formula, Term};
use super::LogicError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InferenceRule {
    #[serde(rename = "MP")]
    ModusPonens,
    #[serde(rename = "MT")]
    ModusTollens,
    #[serde(rename = "HS")]
    HypotheticalSyllogism,
    #[serde(rename = "DS")]
    DisjunctiveSyllogism,
    #[serde(rename = "CD")]
    ConstructiveDilemma,
    #[serde(rename = "DD")]
    DestructiveDilemma,
    #[serde(rename = "BD")]
    BidirectionalDilemma,
    #[serde(rename = "CT")]
    Commutation,
    #[serde(rename = "DMT")]
    DeMorgan,
    #[serde(rename = "CO")]
    Composition,
    #[serde(rename = "IM")]
    Importation,
    #[serde(rename = "EG")]
    ExistentialGeneralization,
    #[serde(rename = "UI")]
    UniversalInstantiation,
}

impl InferenceRule {
    pub const ALL: [InferenceRule; 13] = [
        InferenceRule::ModusPonens,
        InferenceRule::ModusTollens,
        InferenceRule::HypotheticalSyllogism,
        InferenceRule::DisjunctiveSyllogism,
        InferenceRule::ConstructiveDilemma,
        InferenceRule::DestructiveDilemma,
        InferenceRule::BidirectionalDilemma,
        InferenceRule::Commutation,
        InferenceRule::DeMorgan,
        InferenceRule::Composition,
        InferenceRule::Importation,
        InferenceRule::ExistentialGeneralization,
        InferenceRule::UniversalInstantiation,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            InferenceRule::ModusPonens => "MP",
            InferenceRule::ModusTollens => "MT",
            InferenceRule::HypotheticalSyllogism => "HS",
            InferenceRule::DisjunctiveSyllogism => "DS",
            InferenceRule::ConstructiveDilemma => "CD",
            InferenceRule::DestructiveDilemma => "DD",
            InferenceRule::BidirectionalDilemma => "BD",
            InferenceRule::Commutation => "CT",
            InferenceRule::DeMorgan => "DMT",
            InferenceRule::Composition => "CO",
            InferenceRule::Importation => "IM",
            InferenceRule::ExistentialGeneralization => "EG",
            InferenceRule::UniversalInstantiation => "UI",
        }
    }

    /// Premise forms accepted by this rule; the first is the tabulated one.
    pub fn premise_forms(self) -> &'static [Vec<Formula>] {
        &schema(self).forms
    }

    /// Conclusion schema with placeholders.
    pub fn conclusion_schema(self) -> &'static Formula {
        &schema(self).conclusion
    }

    /// Placeholders the conclusion needs that no premise binds.
    pub fn needs_constant(self) -> bool {
        matches!(self, InferenceRule::HypotheticalSyllogism | InferenceRule::UniversalInstantiation)
    }

    /// Number of distinct predicate placeholders in the scheme.
    pub fn predicate_count(self) -> usize {
        schema(self).conclusion_predicates
    }

    /// Fills premise form `form` with concrete symbols. `preds` binds `$p`,
    /// `$q`, `$r`, `$s` in order.
    pub fn instantiate_premises(
        self,
        form: usize,
        preds: &[&str],
        constant: &str,
        var: &str,
    ) -> Vec<Formula> {
        let m = RuleMatch {
            preds: ["$p", "$q", "$r", "$s"]
                .iter()
                .zip(preds)
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            ..RuleMatch::default()
        };
        self.premise_forms()[form].iter().map(|f| m.instantiate(f, constant, var)).collect()
    }
}

impl fmt::Display for InferenceRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for InferenceRule {
    type Err = LogicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InferenceRule::ALL
            .into_iter()
            .find(|r| r.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| LogicError::UnknownRule(s.to_string()))
    }
}

struct Schema {
    forms: Vec<Vec<Formula>>,
    conclusion: Formula,
    conclusion_predicates: usize,
}

fn ph(pred: &str, term: &Term) -> Formula {
    Formula::Atom { pred: format!("${pred}"), args: vec![term.clone()] }
}

fn schema(rule: InferenceRule) -> &'static Schema {
    static TABLE: OnceLock<Vec<Schema>> = OnceLock::new();
    let table = TABLE.get_or_init(|| InferenceRule::ALL.iter().map(|r| build_schema(*r)).collect());
    let idx = InferenceRule::ALL.iter().position(|r| *r == rule).expect("rule in table");
    &table[idx]
}

fn build_schema(rule: InferenceRule) -> Schema {
    use Formula as F;
    let x = Term::Var("$x".into());
    let a = Term::Const("$a".into());
    let p = |t: &Term| ph("p", t);
    let q = |t: &Term| ph("q", t);
    let r = |t: &Term| ph("r", t);
    let s = |t: &Term| ph("s", t);
    let all = |body: Formula| F::forall("$x", body);
    let imp = F::implies;
    let two_rules = |p2: Formula, q2: Formula, r2: Formula, s2: Formula| {
        F::and(imp(p2, q2), imp(r2, s2))
    };

    let (forms, conclusion, n) = match rule {
        InferenceRule::ModusPonens => {
            (vec![vec![all(imp(p(&x), q(&x))), p(&a)]], q(&a), 2)
        }
        InferenceRule::ModusTollens => (
            vec![vec![all(imp(p(&x), q(&x))), F::not(q(&a))]],
            F::not(p(&a)),
            2,
        ),
        InferenceRule::HypotheticalSyllogism => (
            vec![
                vec![all(F::and(imp(p(&x), q(&x)), imp(q(&x), r(&x))))],
                vec![all(imp(p(&x), q(&x))), all(imp(q(&x), r(&x)))],
            ],
            imp(p(&a), r(&a)),
            3,
        ),
        InferenceRule::DisjunctiveSyllogism => (
            vec![
                vec![all(F::or(p(&x), q(&x))), F::not(p(&a))],
                vec![F::or(p(&a), q(&a)), F::not(p(&a))],
            ],
            q(&a),
            2,
        ),
        InferenceRule::ConstructiveDilemma => (
            vec![
                vec![all(two_rules(p(&x), q(&x), r(&x), s(&x))), F::or(p(&a), r(&a))],
                vec![all(imp(p(&x), q(&x))), all(imp(r(&x), s(&x))), F::or(p(&a), r(&a))],
            ],
            F::or(q(&a), s(&a)),
            4,
        ),
        InferenceRule::DestructiveDilemma => (
            vec![
                vec![
                    all(two_rules(p(&x), q(&x), r(&x), s(&x))),
                    F::or(F::not(q(&a)), F::not(s(&a))),
                ],
                vec![
                    all(imp(p(&x), q(&x))),
                    all(imp(r(&x), s(&x))),
                    F::or(F::not(q(&a)), F::not(s(&a))),
                ],
            ],
            F::or(F::not(p(&a)), F::not(r(&a))),
            4,
        ),
        InferenceRule::BidirectionalDilemma => (
            vec![
                vec![all(two_rules(p(&x), q(&x), r(&x), s(&x))), F::or(p(&a), F::not(s(&a)))],
                vec![
                    all(imp(p(&x), q(&x))),
                    all(imp(r(&x), s(&x))),
                    F::or(p(&a), F::not(s(&a))),
                ],
            ],
            F::or(q(&a), F::not(r(&a))),
            4,
        ),
        InferenceRule::Commutation => {
            (vec![vec![all(F::or(p(&x), q(&x)))]], all(F::or(q(&x), p(&x))), 2)
        }
        InferenceRule::DeMorgan => (
            vec![vec![F::not(all(F::and(p(&x), q(&x))))]],
            F::exists("$x", F::or(F::not(p(&x)), F::not(q(&x)))),
            2,
        ),
        InferenceRule::Composition => (
            vec![
                vec![all(F::and(imp(p(&x), q(&x)), imp(p(&x), r(&x))))],
                vec![all(imp(p(&x), q(&x))), all(imp(p(&x), r(&x)))],
            ],
            all(imp(p(&x), F::and(q(&x), r(&x)))),
            3,
        ),
        InferenceRule::Importation => (
            vec![vec![all(imp(p(&x), imp(q(&x), r(&x))))]],
            all(imp(F::and(p(&x), q(&x)), r(&x))),
            3,
        ),
        InferenceRule::ExistentialGeneralization => {
            (vec![vec![p(&a)]], F::exists("$x", p(&x)), 1)
        }
        InferenceRule::UniversalInstantiation => (vec![vec![all(p(&x))]], p(&a), 1),
    };
    Schema { forms, conclusion, conclusion_predicates: n }
}

/// Placeholder assignment produced by unifying a premise form.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleMatch {
    preds: Vec<(String, String)>,
    constant: Option<String>,
    var: Option<String>,
    first_var: Option<String>,
}

impl RuleMatch {
    pub fn predicate(&self, placeholder: &str) -> Option<&str> {
        self.preds.iter().find(|(k, _)| k == placeholder).map(|(_, v)| v.as_str())
    }

    pub fn constant(&self) -> Option<&str> {
        self.constant.as_deref()
    }

    fn bind_pred(&mut self, placeholder: &str, actual: &str) -> bool {
        if let Some(bound) = self.predicate(placeholder) {
            return bound == actual;
        }
        // distinct placeholders never share a predicate
        if self.preds.iter().any(|(_, v)| v == actual) {
            return false;
        }
        self.preds.push((placeholder.to_string(), actual.to_string()));
        true
    }

    fn bind_term(&mut self, pat: &Term, actual: &Term) -> bool {
        match (pat, actual) {
            (Term::Var(pv), Term::Var(v)) if pv.starts_with('$') => match &self.var {
                Some(bound) => bound == v,
                None => {
                    self.var = Some(v.clone());
                    if self.first_var.is_none() {
                        self.first_var = Some(v.clone());
                    }
                    true
                }
            },
            (Term::Const(pc), Term::Const(c)) if pc.starts_with('$') => match &self.constant {
                Some(bound) => bound == c,
                None => {
                    self.constant = Some(c.clone());
                    true
                }
            },
            (p, a) => p == a,
        }
    }

    fn unify(&mut self, pat: &Formula, f: &Formula) -> bool {
        match (pat, f) {
            (Formula::Atom { pred: pp, args: pa }, Formula::Atom { pred, args }) => {
                pa.len() == args.len()
                    && self.bind_pred(pp, pred)
                    && pa.iter().zip(args).all(|(p, a)| self.bind_term(p, a))
            }
            (Formula::Not(pa), Formula::Not(a)) => self.unify(pa, a),
            (Formula::And(p1, p2), Formula::And(a1, a2))
            | (Formula::Or(p1, p2), Formula::Or(a1, a2))
            | (Formula::Implies(p1, p2), Formula::Implies(a1, a2)) => {
                self.unify(p1, a1) && self.unify(p2, a2)
            }
            (Formula::ForAll(pv, pb), Formula::ForAll(v, b))
            | (Formula::Exists(pv, pb), Formula::Exists(v, b)) => {
                self.bind_term(&Term::Var(pv.clone()), &Term::Var(v.clone())) && self.unify(pb, b)
            }
            _ => false,
        }
    }

    /// Unifies one premise; the bound variable is scoped to that premise.
    fn unify_premise(&self, pat: &Formula, f: &Formula) -> Option<RuleMatch> {
        let mut next = self.clone();
        next.var = None;
        if next.unify(pat, f) {
            Some(next)
        } else {
            None
        }
    }

    fn instantiate(&self, pat: &Formula, constant: &str, var: &str) -> Formula {
        match pat {
            Formula::Atom { pred, args } => Formula::Atom {
                pred: self.predicate(pred).unwrap_or(pred).to_string(),
                args: args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) if v.starts_with('$') => Term::Var(var.to_string()),
                        Term::Const(c) if c.starts_with('$') => Term::Const(constant.to_string()),
                        other => other.clone(),
                    })
                    .collect(),
            },
            Formula::Not(a) => Formula::not(self.instantiate(a, constant, var)),
            Formula::And(a, b) => {
                Formula::and(self.instantiate(a, constant, var), self.instantiate(b, constant, var))
            }
            Formula::Or(a, b) => {
                Formula::or(self.instantiate(a, constant, var), self.instantiate(b, constant, var))
            }
            Formula::Implies(a, b) => Formula::implies(
                self.instantiate(a, constant, var),
                self.instantiate(b, constant, var),
            ),
            Formula::ForAll(_, b) => Formula::forall(var, self.instantiate(b, constant, var)),
            Formula::Exists(_, b) => Formula::exists(var, self.instantiate(b, constant, var)),
        }
    }
}

/// Enumerates every way of matching `form` against distinct members of `pool`,
/// in leftmost-first order. `cb` receives the match and the pool indices used;
/// returning `false` stops the search.
pub(crate) fn for_each_match(
    form: &[Formula],
    pool: &[&Formula],
    cb: &mut dyn FnMut(&RuleMatch, &[usize]) -> bool,
) {
    fn go(
        form: &[Formula],
        pool: &[&Formula],
        at: &RuleMatch,
        used: &mut Vec<usize>,
        cb: &mut dyn FnMut(&RuleMatch, &[usize]) -> bool,
    ) -> bool {
        let Some((pat, rest)) = form.split_first() else {
            return cb(at, used);
        };
        for (i, f) in pool.iter().enumerate() {
            if used.contains(&i) {
                continue;
            }
            if let Some(next) = at.unify_premise(pat, f) {
                used.push(i);
                let keep_going = go(rest, pool, &next, used, cb);
                used.pop();
                if !keep_going {
                    return false;
                }
            }
        }
        true
    }
    go(form, pool, &RuleMatch::default(), &mut Vec::new(), cb);
}

/// Instantiates the conclusion of `rule` under `m`. `constant` fills an
/// unbound `$a` (HS, UI); an unbound variable defaults to `x`.
pub(crate) fn conclude(
    rule: InferenceRule,
    m: &RuleMatch,
    constant: Option<&str>,
) -> Result<Formula, LogicError> {
    let constant = match (m.constant(), constant) {
        (Some(bound), _) => bound.to_string(),
        (None, Some(c)) if !is_variable_name(c) => c.to_string(),
        (None, _) if rule.needs_constant() => return Err(LogicError::MissingConstant { rule }),
        (None, _) => String::new(),
    };
    let var = m.first_var.clone().unwrap_or_else(|| "x".to_string());
    Ok(m.instantiate(rule.conclusion_schema(), &constant, &var))
}

/// Applies one inference scheme to `premises`.
///
/// Every premise must be used. Premise order is free; the first assignment
/// found scanning schema slots left to right wins. `constant` names the
/// individual for schemes whose conclusion mentions a constant absent from
/// the premises (HS, UI) and is ignored otherwise.
pub fn apply_rule(
    rule: InferenceRule,
    premises: &[Formula],
    constant: Option<&str>,
) -> Result<Formula, LogicError> {
    for f in premises {
        for p in f.predicates() {
            if p.arity != 1 {
                return Err(LogicError::ArityError { predicate: p.name, arity: p.arity });
            }
        }
    }
    let pool: Vec<&Formula> = premises.iter().collect();
    for form in rule.premise_forms() {
        if form.len() != premises.len() {
            continue;
        }
        let mut found = None;
        for_each_match(form, &pool, &mut |m, _| {
            found = Some(m.clone());
            false
        });
        if let Some(m) = found {
            return conclude(rule, &m, constant);
        }
    }
    Err(LogicError::SchemaMismatch { rule })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> Formula {
        s.parse().unwrap()
    }

    #[test]
    fn modus_ponens_instance() {
        let out = apply_rule(
            InferenceRule::ModusPonens,
            &[f("forall x (imp (atom p x) (atom q x))"), f("(atom p a)")],
            None,
        )
        .unwrap();
        assert_eq!(out, f("(atom q a)"));
    }

    #[test]
    fn premise_order_is_free() {
        let out = apply_rule(
            InferenceRule::ModusPonens,
            &[f("(atom p a)"), f("forall x (imp (atom p x) (atom q x))")],
            None,
        )
        .unwrap();
        assert_eq!(out, f("(atom q a)"));
    }

    #[test]
    fn universal_instantiation_uses_supplied_constant() {
        let out =
            apply_rule(InferenceRule::UniversalInstantiation, &[f("forall x (atom p x)")], Some("a"))
                .unwrap();
        assert_eq!(out, f("(atom p a)"));
        let err = apply_rule(InferenceRule::UniversalInstantiation, &[f("forall x (atom p x)")], None);
        assert!(matches!(err, Err(LogicError::MissingConstant { .. })));
    }

    #[test]
    fn modus_ponens_without_implication_is_a_mismatch() {
        let err = apply_rule(InferenceRule::ModusPonens, &[f("(atom p a)"), f("(atom q a)")], None);
        assert_eq!(err, Err(LogicError::SchemaMismatch { rule: InferenceRule::ModusPonens }));
    }

    #[test]
    fn non_unary_predicates_are_rejected() {
        let err = apply_rule(
            InferenceRule::ModusPonens,
            &[f("forall x (imp (atom p x) (atom q x))"), f("(atom p a b)")],
            None,
        );
        assert!(matches!(err, Err(LogicError::ArityError { .. })));
    }

    #[test]
    fn predicate_aliasing_is_rejected() {
        let err = apply_rule(
            InferenceRule::ModusPonens,
            &[f("forall x (imp (atom p x) (atom p x))"), f("(atom p a)")],
            None,
        );
        assert!(err.is_err());
    }

    #[test]
    fn de_morgan_and_generalization() {
        let out = apply_rule(
            InferenceRule::DeMorgan,
            &[f("(not forall y (and (atom p y) (atom q y)))")],
            None,
        )
        .unwrap();
        assert_eq!(out, f("exists y (or (not (atom p y)) (not (atom q y)))"));
        let eg = apply_rule(InferenceRule::ExistentialGeneralization, &[f("(atom p a)")], None)
            .unwrap();
        assert_eq!(eg, f("exists x (atom p x)"));
    }

    #[test]
    fn split_forms_are_accepted() {
        let hs = apply_rule(
            InferenceRule::HypotheticalSyllogism,
            &[f("forall x (imp (atom p x) (atom q x))"), f("forall y (imp (atom q y) (atom r y))")],
            Some("a"),
        )
        .unwrap();
        assert_eq!(hs, f("(imp (atom p a) (atom r a))"));
        let ds = apply_rule(
            InferenceRule::DisjunctiveSyllogism,
            &[f("(or (atom q a) (atom s a))"), f("(not (atom q a))")],
            None,
        )
        .unwrap();
        assert_eq!(ds, f("(atom s a)"));
    }

    #[test]
    fn tags_round_trip() {
        for r in InferenceRule::ALL {
            assert_eq!(r.tag().parse::<InferenceRule>().unwrap(), r);
        }
        assert_eq!(InferenceRule::ALL.len(), 13);
    }
}
