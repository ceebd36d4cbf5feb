// SPDX-License-Identifier: MIT OR Apache-2.0

//! Finite-domain entailment.
//!
//! A theory and query are grounded over a domain of `d` anonymous elements.
//! Constants are interpreted by every map into the domain up to renaming of
//! elements (restricted growth strings), and every truth assignment to the
//! ground atoms `p(e)` is covered either by plain enumeration
//! ([`entails_by_enumeration`]) or by a complete DPLL model search
//! ([`entails`]), which is what generation-scale theories need.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::formula::{Formula, Term};
use super::LogicError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Entailed,
    NotEntailed,
    Undetermined,
}

#[derive(Clone, Copy, Debug)]
pub struct EntailConfig {
    /// Maximum number of assignments (enumeration) or search decisions (DPLL).
    pub budget: u64,
}

impl Default for EntailConfig {
    fn default() -> Self {
        EntailConfig { budget: 1 << 24 }
    }
}

pub const MAX_DOMAIN: usize = 6;

#[derive(Clone, Debug)]
enum Prop {
    Atom(usize),
    Not(Box<Prop>),
    And(Vec<Prop>),
    Or(Vec<Prop>),
}

impl Prop {
    fn eval(&self, assignment: &[bool]) -> bool {
        match self {
            Prop::Atom(i) => assignment[*i],
            Prop::Not(p) => !p.eval(assignment),
            Prop::And(ps) => ps.iter().all(|p| p.eval(assignment)),
            Prop::Or(ps) => ps.iter().any(|p| p.eval(assignment)),
        }
    }
}

struct Signature {
    preds: BTreeMap<String, usize>,
    consts: Vec<String>,
    domain: usize,
}

impl Signature {
    fn new(theory: &[Formula], query: &Formula, domain: usize) -> Result<Self, LogicError> {
        if domain == 0 || domain > MAX_DOMAIN {
            return Err(LogicError::InvalidDomain(domain));
        }
        let mut preds = BTreeMap::new();
        let mut consts = std::collections::BTreeSet::new();
        for f in theory.iter().chain(std::iter::once(query)) {
            f.check_closed()?;
            for p in f.predicates() {
                let next = preds.len();
                preds.entry(p.name).or_insert(next);
            }
            consts.extend(f.constants());
        }
        Ok(Signature { preds, consts: consts.into_iter().collect(), domain })
    }

    fn atom_count(&self) -> usize {
        self.preds.len() * self.domain
    }

    /// All constant interpretations up to element renaming.
    fn constant_maps(&self) -> Vec<Vec<usize>> {
        fn go(n: usize, d: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == n {
                out.push(cur.clone());
                return;
            }
            let used = cur.iter().map(|v| v + 1).max().unwrap_or(0);
            for v in 0..=used.min(d - 1) {
                cur.push(v);
                go(n, d, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        go(self.consts.len(), self.domain, &mut Vec::new(), &mut out);
        out
    }

    fn ground(&self, f: &Formula, consts: &[usize], env: &mut Vec<(String, usize)>) -> Prop {
        match f {
            Formula::Atom { pred, args } => {
                let elem = match &args[0] {
                    Term::Const(c) => {
                        consts[self.consts.binary_search(c).expect("constant in signature")]
                    }
                    Term::Var(v) => {
                        env.iter().rev().find(|(n, _)| n == v).expect("bound variable").1
                    }
                };
                Prop::Atom(self.preds[pred] * self.domain + elem)
            }
            Formula::Not(a) => Prop::Not(Box::new(self.ground(a, consts, env))),
            Formula::And(a, b) => {
                Prop::And(vec![self.ground(a, consts, env), self.ground(b, consts, env)])
            }
            Formula::Or(a, b) => {
                Prop::Or(vec![self.ground(a, consts, env), self.ground(b, consts, env)])
            }
            Formula::Implies(a, b) => Prop::Or(vec![
                Prop::Not(Box::new(self.ground(a, consts, env))),
                self.ground(b, consts, env),
            ]),
            Formula::ForAll(v, body) | Formula::Exists(v, body) => {
                let parts = (0..self.domain)
                    .map(|e| {
                        env.push((v.clone(), e));
                        let p = self.ground(body, consts, env);
                        env.pop();
                        p
                    })
                    .collect();
                if matches!(f, Formula::ForAll(..)) {
                    Prop::And(parts)
                } else {
                    Prop::Or(parts)
                }
            }
        }
    }
}

/// Entailment by exhaustive truth-table enumeration. Intended for small
/// signatures; fails with `DomainTooLarge` when the assignment count exceeds
/// the budget.
pub fn entails_by_enumeration(
    theory: &[Formula],
    query: &Formula,
    domain_size: usize,
    config: &EntailConfig,
) -> Result<Verdict, LogicError> {
    let sig = Signature::new(theory, query, domain_size)?;
    let maps = sig.constant_maps();
    let atoms = sig.atom_count();
    let needed = (maps.len() as u128) << atoms.min(120);
    if atoms >= 64 || needed > config.budget as u128 {
        return Err(LogicError::DomainTooLarge { needed, budget: config.budget });
    }
    let mut query_always = true;
    let mut negation_always = true;
    let mut assignment = vec![false; atoms];
    for consts in &maps {
        let ground_theory: Vec<Prop> =
            theory.iter().map(|f| sig.ground(f, consts, &mut Vec::new())).collect();
        let ground_query = sig.ground(query, consts, &mut Vec::new());
        for bits in 0u64..(1u64 << atoms) {
            for (i, slot) in assignment.iter_mut().enumerate() {
                *slot = (bits >> i) & 1 == 1;
            }
            if !ground_theory.iter().all(|p| p.eval(&assignment)) {
                continue;
            }
            if ground_query.eval(&assignment) {
                negation_always = false;
            } else {
                query_always = false;
            }
        }
    }
    Ok(verdict(query_always, negation_always))
}

fn verdict(query_always: bool, negation_always: bool) -> Verdict {
    if query_always {
        Verdict::Entailed
    } else if negation_always {
        Verdict::NotEntailed
    } else {
        Verdict::Undetermined
    }
}

/// Decides `theory ⊨ query` over every model with `domain_size` elements.
///
/// `Entailed` when the query holds in all models of the theory (including the
/// vacuous case of an unsatisfiable theory), `NotEntailed` when its negation
/// does, `Undetermined` otherwise.
pub fn entails(
    theory: &[Formula],
    query: &Formula,
    domain_size: usize,
) -> Result<Verdict, LogicError> {
    entails_with(theory, query, domain_size, &EntailConfig::default())
}

pub fn entails_with(
    theory: &[Formula],
    query: &Formula,
    domain_size: usize,
    config: &EntailConfig,
) -> Result<Verdict, LogicError> {
    let sig = Signature::new(theory, query, domain_size)?;
    let mut budget = Budget { left: config.budget, total: config.budget };
    let mut query_always = true;
    let mut negation_always = true;
    for consts in sig.constant_maps() {
        let ground_theory: Vec<Prop> =
            theory.iter().map(|f| sig.ground(f, &consts, &mut Vec::new())).collect();
        let ground_query = sig.ground(query, &consts, &mut Vec::new());
        if query_always {
            let counter = Prop::Not(Box::new(ground_query.clone()));
            if satisfiable(&ground_theory, &counter, sig.atom_count(), &mut budget)? {
                query_always = false;
            }
        }
        if negation_always && satisfiable(&ground_theory, &ground_query, sig.atom_count(), &mut budget)? {
            negation_always = false;
        }
        if !query_always && !negation_always {
            break;
        }
    }
    Ok(verdict(query_always, negation_always))
}

/// True when the theory has a model over `domain_size` elements.
pub fn consistent(theory: &[Formula], domain_size: usize) -> Result<bool, LogicError> {
    let Some(first) = theory.first() else { return Ok(true) };
    let sig = Signature::new(theory, first, domain_size)?;
    let config = EntailConfig::default();
    let mut budget = Budget { left: config.budget, total: config.budget };
    for consts in sig.constant_maps() {
        let ground: Vec<Prop> = theory.iter().map(|f| sig.ground(f, &consts, &mut Vec::new())).collect();
        if satisfiable(&ground, &Prop::And(Vec::new()), sig.atom_count(), &mut budget)? {
            return Ok(true);
        }
    }
    Ok(false)
}

struct Budget {
    left: u64,
    total: u64,
}

/// CNF clause store; literals are `2 * var + negated`.
struct Cnf {
    clauses: Vec<Vec<u32>>,
    vars: usize,
}

impl Cnf {
    fn fresh(&mut self) -> u32 {
        self.vars += 1;
        ((self.vars - 1) * 2) as u32
    }

    /// Tseitin literal for `p`.
    fn literal(&mut self, p: &Prop) -> u32 {
        match p {
            Prop::Atom(i) => (*i as u32) * 2,
            Prop::Not(inner) => self.literal(inner) ^ 1,
            Prop::And(ps) | Prop::Or(ps) => {
                let lits: Vec<u32> = ps.iter().map(|c| self.literal(c)).collect();
                let v = self.fresh();
                if matches!(p, Prop::And(_)) {
                    // v -> each child; all children -> v
                    for &l in &lits {
                        self.clauses.push(vec![v ^ 1, l]);
                    }
                    let mut back: Vec<u32> = lits.iter().map(|l| l ^ 1).collect();
                    back.push(v);
                    self.clauses.push(back);
                } else {
                    let mut fwd = lits.clone();
                    fwd.push(v ^ 1);
                    self.clauses.push(fwd);
                    for &l in &lits {
                        self.clauses.push(vec![l ^ 1, v]);
                    }
                }
                v
            }
        }
    }

    fn assert(&mut self, p: &Prop) {
        match p {
            Prop::And(ps) => ps.iter().for_each(|c| self.assert(c)),
            Prop::Or(ps) if ps.iter().all(is_literal) => {
                let clause = ps.iter().map(|c| self.literal(c)).collect();
                self.clauses.push(clause);
            }
            Prop::Not(inner) => match &**inner {
                Prop::Not(x) => self.assert(x),
                Prop::Or(ps) => {
                    for c in ps {
                        self.assert(&Prop::Not(Box::new(c.clone())));
                    }
                }
                other => {
                    let l = self.literal(other) ^ 1;
                    self.clauses.push(vec![l]);
                }
            },
            other => {
                let l = self.literal(other);
                self.clauses.push(vec![l]);
            }
        }
    }
}

fn is_literal(p: &Prop) -> bool {
    match p {
        Prop::Atom(_) => true,
        Prop::Not(inner) => matches!(**inner, Prop::Atom(_)),
        _ => false,
    }
}

fn satisfiable(
    theory: &[Prop],
    extra: &Prop,
    atoms: usize,
    budget: &mut Budget,
) -> Result<bool, LogicError> {
    let mut cnf = Cnf { clauses: Vec::new(), vars: atoms };
    for p in theory {
        cnf.assert(p);
    }
    cnf.assert(extra);
    let mut solver = Dpll::new(cnf);
    solver.solve(budget)
}

struct Dpll {
    clauses: Vec<Vec<u32>>,
    /// 0 = unassigned, 1 = true, 2 = false
    values: Vec<u8>,
    trail: Vec<usize>,
    order: Vec<usize>,
}

impl Dpll {
    fn new(cnf: Cnf) -> Self {
        let mut counts = vec![0usize; cnf.vars];
        for c in &cnf.clauses {
            for &l in c {
                counts[(l >> 1) as usize] += 1;
            }
        }
        let mut order: Vec<usize> = (0..cnf.vars).filter(|&v| counts[v] > 0).collect();
        order.sort_by(|a, b| counts[*b].cmp(&counts[*a]).then(a.cmp(b)));
        Dpll { clauses: cnf.clauses, values: vec![0; cnf.vars], trail: Vec::new(), order }
    }

    fn lit_value(&self, l: u32) -> u8 {
        match self.values[(l >> 1) as usize] {
            0 => 0,
            v => {
                let is_true = (v == 1) ^ (l & 1 == 1);
                if is_true {
                    1
                } else {
                    2
                }
            }
        }
    }

    fn assign(&mut self, l: u32) {
        let var = (l >> 1) as usize;
        self.values[var] = if l & 1 == 0 { 1 } else { 2 };
        self.trail.push(var);
    }

    /// Unit propagation; false on conflict.
    fn propagate(&mut self) -> bool {
        loop {
            let mut changed = false;
            for ci in 0..self.clauses.len() {
                let mut unassigned = None;
                let mut open = 0;
                let mut satisfied = false;
                for &l in &self.clauses[ci] {
                    match self.lit_value(l) {
                        1 => {
                            satisfied = true;
                            break;
                        }
                        0 => {
                            open += 1;
                            unassigned = Some(l);
                        }
                        _ => {}
                    }
                }
                if satisfied {
                    continue;
                }
                match open {
                    0 => return false,
                    1 => {
                        self.assign(unassigned.expect("one open literal"));
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return true;
            }
        }
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let v = self.trail.pop().expect("trail entry");
            self.values[v] = 0;
        }
    }

    fn solve(&mut self, budget: &mut Budget) -> Result<bool, LogicError> {
        if !self.propagate() {
            return Ok(false);
        }
        let Some(&var) = self.order.iter().find(|&&v| self.values[v] == 0) else {
            return Ok(true);
        };
        for lit in [(var * 2) as u32, (var * 2 + 1) as u32] {
            if budget.left == 0 {
                return Err(LogicError::DomainTooLarge {
                    needed: budget.total as u128 + 1,
                    budget: budget.total,
                });
            }
            budget.left -= 1;
            let mark = self.trail.len();
            self.assign(lit);
            if self.solve(budget)? {
                return Ok(true);
            }
            self.undo_to(mark);
        }
        Ok(false)
    }
}
