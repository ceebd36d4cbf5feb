// SPDX-License-Identifier: MIT OR Apache-2.0

//! First-order formulas over unary predicates and their canonical prefix text form.
//!
//! The text form is what dataset files carry:
//!
//! ```text
//! forall x (imp (atom p x) (atom q x))
//! (not forall x (and (atom p x) (atom q x)))
//! ```
//!
//! Variables and constants come from disjoint name pools: a variable is a
//! single letter in `u..=z` optionally followed by digits, anything else is a
//! constant.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::LogicError;

/// Returns true if `name` belongs to the variable pool.
pub fn is_variable_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if ('u'..='z').contains(&c) => chars.all(|c| c.is_ascii_digit()),
        _ => false,
    }
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '$' => {
            chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        }
        _ => false,
    }
}

/// A predicate symbol with its arity. Only arity 1 is supported by the engine.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate {
    pub name: String,
    pub arity: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const(String),
    Var(String),
}

impl Term {
    /// Classifies `name` by pool.
    pub fn named(name: &str) -> Term {
        if is_variable_name(name) {
            Term::Var(name.to_string())
        } else {
            Term::Const(name.to_string())
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Const(n) | Term::Var(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Atom { pred: String, args: Vec<Term> },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    ForAll(String, Box<Formula>),
    Exists(String, Box<Formula>),
}

impl Formula {
    /// Unary atom `pred(term)`; `term` is classified by name pool.
    pub fn atom(pred: &str, term: &str) -> Formula {
        Formula::Atom { pred: pred.to_string(), args: vec![Term::named(term)] }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn forall(var: &str, body: Formula) -> Formula {
        Formula::ForAll(var.to_string(), Box::new(body))
    }

    pub fn exists(var: &str, body: Formula) -> Formula {
        Formula::Exists(var.to_string(), Box::new(body))
    }

    /// The syntactic negation: strips one leading `Not`, otherwise adds one.
    pub fn negated(&self) -> Formula {
        match self {
            Formula::Not(inner) => (**inner).clone(),
            other => Formula::not(other.clone()),
        }
    }

    /// True for `Atom` and `Not(Atom)`.
    pub fn is_literal(&self) -> bool {
        match self {
            Formula::Atom { .. } => true,
            Formula::Not(inner) => matches!(**inner, Formula::Atom { .. }),
            _ => false,
        }
    }

    pub fn is_ground(&self) -> bool {
        self.free_vars().is_empty() && self.quantifier_depth() == 0
    }

    pub fn predicates(&self) -> BTreeSet<Predicate> {
        let mut out = BTreeSet::new();
        self.visit_atoms(&mut |pred, args| {
            out.insert(Predicate { name: pred.to_string(), arity: args.len() });
        });
        out
    }

    pub fn constants(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_atoms(&mut |_, args| {
            for t in args {
                if let Term::Const(c) = t {
                    out.insert(c.clone());
                }
            }
        });
        out
    }

    fn visit_atoms(&self, f: &mut impl FnMut(&str, &[Term])) {
        match self {
            Formula::Atom { pred, args } => f(pred, args),
            Formula::Not(a) => a.visit_atoms(f),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.visit_atoms(f);
                b.visit_atoms(f);
            }
            Formula::ForAll(_, body) | Formula::Exists(_, body) => body.visit_atoms(f),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Formula::Atom { args, .. } => {
                for t in args {
                    if let Term::Var(v) = t {
                        if !bound.contains(v) {
                            out.insert(v.clone());
                        }
                    }
                }
            }
            Formula::Not(a) => a.collect_free(bound, out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Formula::ForAll(v, body) | Formula::Exists(v, body) => {
                bound.push(v.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// Maximum nesting of quantifiers.
    pub fn quantifier_depth(&self) -> usize {
        match self {
            Formula::Atom { .. } => 0,
            Formula::Not(a) => a.quantifier_depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.quantifier_depth().max(b.quantifier_depth())
            }
            Formula::ForAll(_, body) | Formula::Exists(_, body) => 1 + body.quantifier_depth(),
        }
    }

    /// Replaces free occurrences of variable `var` with `term`.
    pub fn substitute(&self, var: &str, term: &Term) -> Formula {
        match self {
            Formula::Atom { pred, args } => Formula::Atom {
                pred: pred.clone(),
                args: args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) if v == var => term.clone(),
                        other => other.clone(),
                    })
                    .collect(),
            },
            Formula::Not(a) => Formula::not(a.substitute(var, term)),
            Formula::And(a, b) => Formula::and(a.substitute(var, term), b.substitute(var, term)),
            Formula::Or(a, b) => Formula::or(a.substitute(var, term), b.substitute(var, term)),
            Formula::Implies(a, b) => {
                Formula::implies(a.substitute(var, term), b.substitute(var, term))
            }
            Formula::ForAll(v, _) | Formula::Exists(v, _) if v == var => self.clone(),
            Formula::ForAll(v, body) => Formula::forall(v, body.substitute(var, term)),
            Formula::Exists(v, body) => Formula::exists(v, body.substitute(var, term)),
        }
    }

    /// Checks the constraints on a theory member: closed, quantifier depth at
    /// most one, unary predicates, well-formed names.
    pub fn check_closed(&self) -> Result<(), LogicError> {
        for p in self.predicates() {
            if p.arity != 1 {
                return Err(LogicError::ArityError { predicate: p.name, arity: p.arity });
            }
        }
        if let Some(v) = self.free_vars().into_iter().next() {
            return Err(LogicError::FreeVariable(v));
        }
        if self.quantifier_depth() > 1 {
            return Err(LogicError::QuantifierDepth(self.to_string()));
        }
        Ok(())
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom { pred, args } => {
                write!(f, "(atom {pred}")?;
                for t in args {
                    write!(f, " {}", t.name())?;
                }
                write!(f, ")")
            }
            Formula::Not(a) => write!(f, "(not {a})"),
            Formula::And(a, b) => write!(f, "(and {a} {b})"),
            Formula::Or(a, b) => write!(f, "(or {a} {b})"),
            Formula::Implies(a, b) => write!(f, "(imp {a} {b})"),
            Formula::ForAll(v, body) => write!(f, "forall {v} {body}"),
            Formula::Exists(v, body) => write!(f, "exists {v} {body}"),
        }
    }
}

struct Parser<'a> {
    tokens: Vec<&'a str>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match c {
                '(' | ')' => {
                    if let Some(s) = start.take() {
                        tokens.push(&text[s..i]);
                    }
                    tokens.push(&text[i..i + 1]);
                }
                c if c.is_whitespace() => {
                    if let Some(s) = start.take() {
                        tokens.push(&text[s..i]);
                    }
                }
                _ => {
                    if start.is_none() {
                        start = Some(i);
                    }
                }
            }
        }
        if let Some(s) = start {
            tokens.push(&text[s..]);
        }
        Parser { tokens, pos: 0 }
    }

    fn next(&mut self) -> Result<&'a str, LogicError> {
        let tok = self
            .tokens
            .get(self.pos)
            .copied()
            .ok_or_else(|| LogicError::Parse("unexpected end of input".into()))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, want: &str) -> Result<(), LogicError> {
        let got = self.next()?;
        if got != want {
            return Err(LogicError::Parse(format!("expected `{want}`, found `{got}`")));
        }
        Ok(())
    }

    fn ident(&mut self) -> Result<&'a str, LogicError> {
        let tok = self.next()?;
        if !is_identifier(tok) {
            return Err(LogicError::Parse(format!("bad identifier `{tok}`")));
        }
        Ok(tok)
    }

    fn formula(&mut self) -> Result<Formula, LogicError> {
        match self.next()? {
            "(" => {
                let head = self.next()?;
                let out = match head {
                    "atom" => {
                        let pred = self.ident()?.to_string();
                        let mut args = Vec::new();
                        while self.tokens.get(self.pos) != Some(&")") {
                            args.push(Term::named(self.ident()?));
                        }
                        if args.is_empty() {
                            return Err(LogicError::Parse(format!("atom `{pred}` has no arguments")));
                        }
                        Formula::Atom { pred, args }
                    }
                    "not" => Formula::not(self.formula()?),
                    "and" => Formula::and(self.formula()?, self.formula()?),
                    "or" => Formula::or(self.formula()?, self.formula()?),
                    "imp" => Formula::implies(self.formula()?, self.formula()?),
                    other => return Err(LogicError::Parse(format!("unknown connective `{other}`"))),
                };
                self.expect(")")?;
                Ok(out)
            }
            q @ ("forall" | "exists") => {
                let var = self.ident()?;
                if !is_variable_name(var) {
                    return Err(LogicError::Parse(format!("`{var}` is not a variable name")));
                }
                let body = self.formula()?;
                Ok(if q == "forall" { Formula::forall(var, body) } else { Formula::exists(var, body) })
            }
            other => Err(LogicError::Parse(format!("unexpected token `{other}`"))),
        }
    }
}

impl FromStr for Formula {
    type Err = LogicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parser = Parser::new(s);
        let f = parser.formula()?;
        if parser.pos != parser.tokens.len() {
            return Err(LogicError::Parse(format!(
                "trailing input after formula: `{}`",
                parser.tokens[parser.pos..].join(" ")
            )));
        }
        Ok(f)
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prints_canonical_form() {
        let f = Formula::forall("x", Formula::implies(Formula::atom("p", "x"), Formula::atom("q", "x")));
        assert_eq!(f.to_string(), "forall x (imp (atom p x) (atom q x))");
    }

    #[test]
    fn parses_nested_quantifier_under_not() {
        let text = "(not forall x (and (atom p x) (atom q x)))";
        let f: Formula = text.parse().unwrap();
        assert_eq!(f.to_string(), text);
        assert!(f.free_vars().is_empty());
        assert_eq!(f.quantifier_depth(), 1);
    }

    #[test]
    fn name_pools_are_disjoint() {
        assert!(is_variable_name("x"));
        assert!(is_variable_name("y2"));
        assert!(!is_variable_name("a"));
        assert!(!is_variable_name("Polly"));
        assert!(!is_variable_name("xavier"));
        let f = Formula::atom("p", "a");
        assert_eq!(f.constants().into_iter().collect::<Vec<_>>(), vec!["a".to_string()]);
    }

    #[test]
    fn rejects_garbage() {
        assert!("(atom p)".parse::<Formula>().is_err());
        assert!("(foo (atom p a))".parse::<Formula>().is_err());
        assert!("forall a (atom p a)".parse::<Formula>().is_err());
        assert!("(atom p a) (atom q a)".parse::<Formula>().is_err());
        assert!("(not (atom p a)".parse::<Formula>().is_err());
    }

    #[test]
    fn closedness_checks() {
        let free = Formula::atom("p", "x");
        assert!(matches!(free.check_closed(), Err(LogicError::FreeVariable(_))));
        let binary: Formula = "(atom r a b)".parse().unwrap();
        assert!(matches!(binary.check_closed(), Err(LogicError::ArityError { .. })));
        let nested: Formula = "forall x exists y (or (atom p x) (atom q y))".parse().unwrap();
        assert!(matches!(nested.check_closed(), Err(LogicError::QuantifierDepth(_))));
    }

    #[test]
    fn substitution_respects_binding() {
        let f: Formula = "(and (atom p x) forall x (atom q x))".parse().unwrap();
        let g = f.substitute("x", &Term::Const("a".into()));
        assert_eq!(g.to_string(), "(and (atom p a) forall x (atom q x))");
    }

    #[test]
    fn negation_is_an_involution() {
        let f = Formula::atom("p", "a");
        assert_eq!(f.negated().negated(), f);
        assert_eq!(f.negated(), Formula::not(f.clone()));
    }
}
