// SPDX-License-Identifier: MIT OR Apache-2.0

//! Monadic first-order logic: formulas, the thirteen inference-rule schemes,
//! a finite-domain entailment oracle, and derivation-depth provers.

mod chain;
mod entail;
mod formula;
mod rules;

pub use chain::{
    derive, forward_chain, is_horn, proof_depth, DerivationTrace, ProofSystem, StepRule, TraceStep,
    DEFAULT_MAX_DEPTH,
};
pub use entail::{consistent, entails, entails_by_enumeration, entails_with, EntailConfig, Verdict};
pub use formula::{is_variable_name, Formula, Predicate, Term};
pub use rules::{apply_rule, InferenceRule, RuleMatch};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("predicate `{predicate}` has arity {arity}, only unary predicates are supported")]
    ArityError { predicate: String, arity: usize },
    #[error("free variable `{0}` at top level")]
    FreeVariable(String),
    #[error("quantifier nesting deeper than one in `{0}`")]
    QuantifierDepth(String),
    #[error("premises do not match the {rule} schema")]
    SchemaMismatch { rule: InferenceRule },
    #[error("{rule} needs a constant to instantiate its conclusion")]
    MissingConstant { rule: InferenceRule },
    #[error("domain size {0} outside the supported range 1..=6")]
    InvalidDomain(usize),
    #[error("model search exceeds the budget of {budget} (needed {needed})")]
    DomainTooLarge { needed: u128, budget: u64 },
    #[error("theory member {index} is outside the Horn fragment: {formula}")]
    FragmentViolation { index: usize, formula: String },
    #[error("neither `{0}` nor its negation is derivable")]
    NotDerivable(String),
    #[error("unknown inference rule tag `{0}`")]
    UnknownRule(String),
}
