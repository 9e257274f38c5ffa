//! Tier 1: flat theories, sort checking, evaluation and bounded obligation checking.

pub mod eval;
pub mod expr;
pub mod obligations;
pub mod theory;
pub mod value;

use std::collections::BTreeMap;

pub use eval::{Bindings, EvalError, Evaluator, World};
pub use expr::{ElabError, Elaborator, Expr, ExprKind, Scope};
pub use obligations::{check_obligations, random_value, Budget, ObligationResult, Verdict};
pub use theory::{flatten, FlattenError, Interp, OpId, Theory};
pub use value::{StateTag, Value};

use crate::sort::Sort;
use crate::store::Store;
use crate::syntax::ast::Term;

/// Result of normalizing a ground term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Normal {
    Value(Value),
    /// No rule applies to the named subterm.
    Stuck(String),
}

/// The sort of `term` in `scope`.
pub fn sort_of(theory: &Theory, term: &Term, scope: &Scope) -> Result<Sort, ElabError> {
    Elaborator::new(theory).infer(term, scope, None).map(|e| e.sort)
}

/// Normalizes a ground term, with environment constants taken from `env`.
pub fn normalize(theory: &Theory, term: &Term, env: &BTreeMap<String, Value>) -> Result<Normal, NormalizeError> {
    let expr = Elaborator::new(theory).infer(term, &Scope::new(), None)?;
    match Evaluator::new(theory, env).eval(&expr, &Bindings::new()) {
        Ok(v) => Ok(Normal::Value(v)),
        Err(EvalError::Stuck { term }) => Ok(Normal::Stuck(term)),
        Err(e) => Err(e.into()),
    }
}

/// Evaluates a Boolean guard against a store.
pub fn eval_guard(theory: &Theory, guard: &Expr, bindings: &Bindings, store: &Store) -> Result<bool, EvalError> {
    Evaluator::new(theory, &store.env)
        .with_world(World::single(store))
        .truth(guard, bindings)
}

#[derive(Clone, Debug, thiserror::Error, PartialEq, Eq)]
pub enum NormalizeError {
    #[error(transparent)]
    Elab(#[from] ElabError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
