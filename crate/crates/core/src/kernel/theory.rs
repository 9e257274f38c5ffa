//! Include expansion of traits into a flat theory, and classification of its
//! equations into rewrite rules and obligations.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::diag::{Diagnostic, Span};
use crate::kernel::expr::{ElabError, Elaborator, Expr, ExprKind, Scope};
use crate::kernel::value::{StateTag, Value};
use crate::sort::Sort;
use crate::syntax::ast::{Actual, EqBlock, Field, Fixity, OpDecl, Term, TermKind, TraitUnit};
use crate::syntax::render_term;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpId(pub usize);

/// Built-in operators evaluated natively.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Native {
    True,
    False,
    Add,
    Sub,
    Mul,
    Neg,
    Div,
    Mod,
    Lt,
    Le,
    Gt,
    Ge,
    Len,
    Empty,
    Insert,
    Delete,
    In,
    NotIn,
    Size,
    Contained,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pattern {
    Var(String),
    Lit(Value),
    Tuple(Vec<Pattern>),
}

impl Pattern {
    fn from_expr(e: &Expr) -> Option<Pattern> {
        match &e.kind {
            ExprKind::Var(v) => Some(Pattern::Var(v.clone())),
            ExprKind::Lit(v) => Some(Pattern::Lit(v.clone())),
            ExprKind::Tuple(fs) => fs.iter().map(Pattern::from_expr).collect::<Option<Vec<_>>>().map(Pattern::Tuple),
            _ => None,
        }
    }

    fn vars(&self, out: &mut Vec<String>) {
        match self {
            Pattern::Var(v) => out.push(v.clone()),
            Pattern::Lit(_) => {}
            Pattern::Tuple(ps) => ps.iter().for_each(|p| p.vars(out)),
        }
    }
}

/// An oriented, possibly conditional rewrite rule `f(lhs) -> rhs if cond`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub lhs: Vec<Pattern>,
    pub rhs: Expr,
    pub cond: Option<Expr>,
    pub origin: String,
    pub span: Span,
}

/// How applications of an operator are evaluated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Interp {
    Rules(Vec<Rule>),
    Native(Native),
    /// `o ! st`: the value of an object in a state.
    ObjValue,
    StateConst(StateTag),
    /// `A -> Set[B]` read from the store's attachment relation.
    Relation,
    /// `B -> A`, the holder of an object under the given relation.
    Inverse(OpId),
    /// Nullary operator bound per run.
    Env,
    Undefined,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpInfo {
    pub name: String,
    pub fixity: Fixity,
    pub args: Vec<Sort>,
    pub result: Sort,
    pub origins: Vec<String>,
    pub span: Span,
    pub interp: Interp,
}

impl OpInfo {
    pub fn signature(&self) -> String {
        let args: Vec<String> = self.args.iter().map(|s| s.to_string()).collect();
        format!("{} : {} -> {}", self.name, args.join(", "), self.result)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AxiomKind {
    Assert,
    Implies,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxiomStatus {
    /// Used as (part of) a rewrite rule.
    Rule,
    /// Same left-hand side as a later rule; kept as an obligation.
    Overridden,
    /// Not orientable; checked by testing.
    Obligation,
}

#[derive(Clone, Debug)]
pub struct Axiom {
    pub origin: String,
    pub kind: AxiomKind,
    pub text: String,
    pub lhs: Expr,
    pub rhs: Option<Expr>,
    pub status: AxiomStatus,
    pub span: Span,
}

/// A trait after transitive include expansion.
#[derive(Clone, Debug)]
pub struct Theory {
    pub name: String,
    pub traits: Vec<String>,
    pub sorts: BTreeSet<Sort>,
    pub ops: Vec<OpInfo>,
    pub tuples: BTreeMap<Sort, Vec<Field>>,
    pub partitions: BTreeMap<Sort, Vec<OpId>>,
    pub generators: BTreeMap<Sort, Vec<String>>,
    pub axioms: Vec<Axiom>,
    /// Object sort -> sort of its values.
    pub object_sorts: BTreeMap<Sort, Sort>,
    pub lints: Vec<Diagnostic>,
}

impl Theory {
    pub fn op(&self, id: OpId) -> &OpInfo {
        &self.ops[id.0]
    }

    pub fn ops_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = OpId> + 'a {
        self.ops.iter().enumerate().filter(move |(_, o)| o.name == name).map(|(i, _)| OpId(i))
    }

    pub fn find_op(&self, name: &str, args: &[Sort]) -> Option<OpId> {
        self.ops_named(name).find(|id| self.op(*id).args == args)
    }

    pub fn has_sort(&self, sort: &Sort) -> bool {
        self.sorts.contains(sort)
    }

    pub fn is_object_sort(&self, sort: &Sort) -> bool {
        self.object_sorts.contains_key(sort)
    }

    /// The `!` operator for objects of `sort`.
    pub fn bang_for(&self, sort: &Sort) -> Option<OpId> {
        self.ops
            .iter()
            .position(|o| o.interp == Interp::ObjValue && o.args.first() == Some(sort))
            .map(OpId)
    }

    pub fn env_consts(&self) -> Vec<OpId> {
        (0..self.ops.len()).map(OpId).filter(|id| self.op(*id).interp == Interp::Env).collect()
    }

    pub fn rules(&self, id: OpId) -> &[Rule] {
        match &self.op(id).interp {
            Interp::Rules(r) => r,
            _ => &[],
        }
    }

    /// Element sort of a relation-valued set sort such as `Set[ZonalClock]`.
    pub fn element_sort(&self, set: &Sort) -> Option<Sort> {
        let insert = self.ops_named("insert").find(|id| self.op(*id).result == *set)?;
        self.op(insert).args.first().cloned()
    }

    /// Names of the operators introduced by user traits (not the built-in library).
    pub fn user_ops(&self) -> impl Iterator<Item = (OpId, &OpInfo)> {
        self.ops
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.origins.iter().all(|t| NATIVE_TRAITS.contains(&t.as_str())))
            .map(|(i, o)| (OpId(i), o))
    }
}

/// Library traits whose operators are evaluated natively.
pub const NATIVE_TRAITS: &[&str] = &["Boolean", "Integer", "String", "Set", "MutableObj"];

/// Traits implicitly included in every flattened theory.
pub const IMPLICIT_TRAITS: &[&str] = &["Boolean", "Integer", "String"];

fn native_for(origin: &str, name: &str, arity: usize) -> Option<Interp> {
    use Native::*;
    let n = match (origin, name, arity) {
        ("Boolean", "true", 0) => True,
        ("Boolean", "false", 0) => False,
        ("Integer", "+", 2) => Add,
        ("Integer", "-", 2) => Sub,
        ("Integer", "*", 2) => Mul,
        ("Integer", "-", 1) => Neg,
        ("Integer", "div", 2) => Div,
        ("Integer", "mod", 2) => Mod,
        ("Integer", "<", 2) => Lt,
        ("Integer", "<=", 2) => Le,
        ("Integer", ">", 2) => Gt,
        ("Integer", ">=", 2) => Ge,
        ("String", "len", 1) => Len,
        ("Set", "empty", 0) => Empty,
        ("Set", "insert", 2) => Insert,
        ("Set", "delete", 2) => Delete,
        ("Set", "in", 2) => In,
        ("Set", "notin", 2) => NotIn,
        ("Set", "size", 1) => Size,
        ("Set", "containedObjects", 2) => Contained,
        ("MutableObj", "!", 2) => return Some(Interp::ObjValue),
        ("MutableObj", st, 0) => return StateTag::from_name(st).map(Interp::StateConst),
        _ => return None,
    };
    Some(Interp::Native(n))
}

#[derive(Clone, Debug, Error)]
pub enum FlattenError {
    #[error("unknown trait `{name}`")]
    UnknownTrait { name: String, span: Span, within: Option<String> },
    #[error("include cycle: {}", chain.join(" -> "))]
    Cycle { chain: Vec<String>, span: Span, within: Option<String> },
    #[error("renaming of undeclared sort or operator `{symbol}` in include of `{trait_name}`")]
    BadRename {
        symbol: String,
        trait_name: String,
        span: Span,
        within: Option<String>,
    },
    #[error("trait `{trait_name}` takes {expected} parameter(s), {got} given")]
    Arity {
        trait_name: String,
        expected: usize,
        got: usize,
        span: Span,
        within: Option<String>,
    },
    #[error("{message}")]
    Signature { message: String, span: Span, within: Option<String> },
    #[error("{error}")]
    Elab { error: ElabError, within: Option<String> },
}

impl FlattenError {
    pub fn span(&self) -> Span {
        match self {
            FlattenError::UnknownTrait { span, .. }
            | FlattenError::Cycle { span, .. }
            | FlattenError::BadRename { span, .. }
            | FlattenError::Arity { span, .. }
            | FlattenError::Signature { span, .. } => *span,
            FlattenError::Elab { error, .. } => error.span,
        }
    }

    /// The trait whose text contains the error, when known.
    pub fn within(&self) -> Option<&str> {
        match self {
            FlattenError::UnknownTrait { within, .. }
            | FlattenError::Cycle { within, .. }
            | FlattenError::BadRename { within, .. }
            | FlattenError::Arity { within, .. }
            | FlattenError::Signature { within, .. }
            | FlattenError::Elab { within, .. } => within.as_deref(),
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        let msg = match self {
            FlattenError::Elab { error, .. } => error.message.clone(),
            other => other.to_string(),
        };
        Diagnostic::error(self.span(), msg)
    }
}

/// Sort and operator substitutions, applied innermost first.
#[derive(Clone, Default)]
struct Mapping {
    sorts: Vec<BTreeMap<Sort, Sort>>,
    ops: Vec<BTreeMap<String, String>>,
}

impl Mapping {
    fn sort(&self, s: &Sort) -> Sort {
        self.sorts.iter().fold(s.clone(), |acc, m| acc.substitute(m))
    }

    fn op(&self, name: &str) -> String {
        self.ops
            .iter()
            .fold(name.to_string(), |acc, m| m.get(&acc).cloned().unwrap_or(acc))
    }

    fn term(&self, t: &Term, bound: &mut Vec<String>) -> Term {
        let kind = match &t.kind {
            TermKind::Id(n) if !bound.contains(n) => TermKind::Id(self.op(n)),
            TermKind::App(n, args) => TermKind::App(self.op(n), args.iter().map(|a| self.term(a, bound)).collect()),
            TermKind::Tuple(fs, s) => {
                TermKind::Tuple(fs.iter().map(|a| self.term(a, bound)).collect(), s.as_ref().map(|s| self.sort(s)))
            }
            TermKind::Proj(x, f) => TermKind::Proj(Box::new(self.term(x, bound)), f.clone()),
            TermKind::Pre(x) => TermKind::Pre(Box::new(self.term(x, bound))),
            TermKind::Post(x) => TermKind::Post(Box::new(self.term(x, bound))),
            TermKind::InState(x, st) => TermKind::InState(Box::new(self.term(x, bound)), st.clone()),
            TermKind::Forall(vars, body) => {
                let n = bound.len();
                let vars: Vec<_> = vars
                    .iter()
                    .map(|v| {
                        bound.push(v.name.clone());
                        crate::syntax::ast::VarDecl {
                            name: v.name.clone(),
                            sort: self.sort(&v.sort),
                            span: v.span,
                        }
                    })
                    .collect();
                let body = self.term(body, bound);
                bound.truncate(n);
                TermKind::Forall(vars, Box::new(body))
            }
            TermKind::Ite(c, a, b) => TermKind::Ite(
                Box::new(self.term(c, bound)),
                Box::new(self.term(a, bound)),
                Box::new(self.term(b, bound)),
            ),
            TermKind::Card(x) => TermKind::Card(Box::new(self.term(x, bound))),
            other => other.clone(),
        };
        Term::new(kind, t.span)
    }

    fn block(&self, b: &EqBlock) -> EqBlock {
        let mut bound: Vec<String> = b.vars.iter().map(|v| v.name.clone()).collect();
        EqBlock {
            vars: b
                .vars
                .iter()
                .map(|v| crate::syntax::ast::VarDecl {
                    name: v.name.clone(),
                    sort: self.sort(&v.sort),
                    span: v.span,
                })
                .collect(),
            equations: b
                .equations
                .iter()
                .map(|e| crate::syntax::ast::Equation {
                    lhs: self.term(&e.lhs, &mut bound),
                    rhs: e.rhs.as_ref().map(|r| self.term(r, &mut bound)),
                    span: e.span,
                })
                .collect(),
        }
    }
}

#[derive(Default)]
struct Raw {
    traits: Vec<String>,
    ops: Vec<(OpDecl, String)>,
    tuples: Vec<(Sort, Vec<Field>, Span, String)>,
    partitions: Vec<(Sort, Vec<String>, Span, String)>,
    generators: Vec<(Sort, Vec<String>)>,
    blocks: Vec<(String, AxiomKind, EqBlock)>,
}

fn sorts_of_unit(unit: &TraitUnit) -> Vec<Sort> {
    let mut out = Vec::new();
    for op in &unit.introduces {
        out.extend(op.args.iter().cloned());
        out.push(op.result.clone());
    }
    for t in &unit.tuples {
        out.push(t.sort.clone());
        out.extend(t.fields.iter().map(|f| f.sort.clone()));
    }
    for b in unit.asserts.iter().chain(&unit.implies) {
        out.extend(b.vars.iter().map(|v| v.sort.clone()));
    }
    for inc in &unit.includes {
        for a in &inc.actuals {
            match a {
                Actual::Positional(s) => out.push(s.clone()),
                Actual::Rename { new, .. } => out.push(new.clone()),
            }
        }
    }
    out
}

fn declares_op(lib: &BTreeMap<String, TraitUnit>, unit: &TraitUnit, name: &str, depth: usize) -> bool {
    if unit.introduces.iter().any(|o| o.name == name) {
        return true;
    }
    depth < 32
        && unit
            .includes
            .iter()
            .filter_map(|i| lib.get(&i.trait_name))
            .any(|u| declares_op(lib, u, name, depth + 1))
}

fn expand(
    name: &str,
    span: Span,
    within: Option<&str>,
    map: &Mapping,
    lib: &BTreeMap<String, TraitUnit>,
    stack: &mut Vec<String>,
    raw: &mut Raw,
) -> Result<(), FlattenError> {
    let Some(unit) = lib.get(name) else {
        return Err(FlattenError::UnknownTrait {
            name: name.to_string(),
            span,
            within: within.map(String::from),
        });
    };
    if stack.iter().any(|s| s == name) {
        let mut chain = stack.clone();
        chain.push(name.to_string());
        return Err(FlattenError::Cycle {
            chain,
            span,
            within: within.map(String::from),
        });
    }
    stack.push(name.to_string());
    if !raw.traits.iter().any(|t| t == name) {
        raw.traits.push(name.to_string());
    }
    for inc in &unit.includes {
        let Some(child) = lib.get(&inc.trait_name) else {
            return Err(FlattenError::UnknownTrait {
                name: inc.trait_name.clone(),
                span: inc.span,
                within: Some(unit.name.clone()),
            });
        };
        let positional: Vec<&Sort> = inc
            .actuals
            .iter()
            .filter_map(|a| match a {
                Actual::Positional(s) => Some(s),
                _ => None,
            })
            .collect();
        if positional.len() > child.params.len() {
            return Err(FlattenError::Arity {
                trait_name: child.name.clone(),
                expected: child.params.len(),
                got: positional.len(),
                span: inc.span,
                within: Some(unit.name.clone()),
            });
        }
        let params: BTreeMap<Sort, Sort> = child
            .params
            .iter()
            .zip(&positional)
            .map(|(p, s)| (Sort::simple(p.clone()), (*s).clone()))
            .collect();
        let child_sorts: Vec<Sort> = sorts_of_unit(child).iter().map(|s| s.substitute(&params)).collect();
        let mut sort_renames = BTreeMap::new();
        let mut op_renames = BTreeMap::new();
        for a in &inc.actuals {
            if let Actual::Rename { new, old } = a {
                if child_sorts.iter().any(|s| s.mentions(old)) {
                    sort_renames.insert(old.clone(), new.clone());
                } else if old.args.is_empty() && declares_op(lib, child, &old.name, 0) {
                    if !new.args.is_empty() {
                        return Err(FlattenError::Signature {
                            message: format!("operator `{}` cannot be renamed to sort-like `{new}`", old.name),
                            span: inc.span,
                            within: Some(unit.name.clone()),
                        });
                    }
                    op_renames.insert(old.name.clone(), new.name.clone());
                } else {
                    return Err(FlattenError::BadRename {
                        symbol: old.to_string(),
                        trait_name: child.name.clone(),
                        span: inc.span,
                        within: Some(unit.name.clone()),
                    });
                }
            }
        }
        let mut child_map = Mapping {
            sorts: vec![params, sort_renames],
            ops: vec![op_renames],
        };
        child_map.sorts.extend(map.sorts.iter().cloned());
        child_map.ops.extend(map.ops.iter().cloned());
        expand(&inc.trait_name, inc.span, Some(&unit.name), &child_map, lib, stack, raw)?;
    }
    let origin = unit.name.clone();
    for op in &unit.introduces {
        raw.ops.push((
            OpDecl {
                name: map.op(&op.name),
                fixity: op.fixity,
                args: op.args.iter().map(|s| map.sort(s)).collect(),
                result: map.sort(&op.result),
                span: op.span,
            },
            origin.clone(),
        ));
    }
    for t in &unit.tuples {
        let fields = t
            .fields
            .iter()
            .map(|f| Field {
                name: f.name.clone(),
                sort: map.sort(&f.sort),
            })
            .collect();
        raw.tuples.push((map.sort(&t.sort), fields, t.span, origin.clone()));
    }
    for p in &unit.partitions {
        raw.partitions
            .push((map.sort(&p.sort), p.ops.iter().map(|o| map.op(o)).collect(), p.span, origin.clone()));
    }
    for g in &unit.generators {
        raw.generators.push((map.sort(&g.sort), g.ops.iter().map(|o| map.op(o)).collect()));
    }
    for (kind, blocks) in [(AxiomKind::Assert, &unit.asserts), (AxiomKind::Implies, &unit.implies)] {
        for b in blocks {
            let mapped = map.block(b);
            if !raw.blocks.iter().any(|(o, k, x)| o == &origin && *k == kind && x == &mapped) {
                raw.blocks.push((origin.clone(), kind, mapped));
            }
        }
    }
    stack.pop();
    Ok(())
}

/// Flattens `root` and its transitive includes into a single theory.
pub fn flatten(root: &str, lib: &BTreeMap<String, TraitUnit>) -> Result<Theory, FlattenError> {
    let mut raw = Raw::default();
    let ident = Mapping::default();
    for implicit in IMPLICIT_TRAITS {
        if lib.contains_key(*implicit) && *implicit != root {
            expand(implicit, Span::default(), None, &ident, lib, &mut Vec::new(), &mut raw)?;
        }
    }
    expand(root, Span::default(), None, &ident, lib, &mut Vec::new(), &mut raw)?;
    build(root, raw)
}

fn sig_err(message: String, span: Span, within: &str) -> FlattenError {
    FlattenError::Signature {
        message,
        span,
        within: Some(within.to_string()),
    }
}

fn build(root: &str, raw: Raw) -> Result<Theory, FlattenError> {
    let mut th = Theory {
        name: root.to_string(),
        traits: raw.traits,
        sorts: BTreeSet::new(),
        ops: Vec::new(),
        tuples: BTreeMap::new(),
        partitions: BTreeMap::new(),
        generators: BTreeMap::new(),
        axioms: Vec::new(),
        object_sorts: BTreeMap::new(),
        lints: Vec::new(),
    };

    // Signature.
    for (decl, origin) in raw.ops {
        if let Some(existing) = th.ops.iter_mut().find(|o| o.name == decl.name && o.args == decl.args) {
            if existing.result != decl.result {
                return Err(sig_err(
                    format!(
                        "operator `{}` declared with results {} and {} for the same argument sorts",
                        decl.name, existing.result, decl.result
                    ),
                    decl.span,
                    &origin,
                ));
            }
            if !existing.origins.contains(&origin) {
                existing.origins.push(origin);
            }
            continue;
        }
        th.ops.push(OpInfo {
            name: decl.name,
            fixity: decl.fixity,
            args: decl.args,
            result: decl.result,
            origins: vec![origin],
            span: decl.span,
            interp: Interp::Undefined,
        });
    }
    for (sort, fields, span, origin) in raw.tuples {
        match th.tuples.get(&sort) {
            Some(existing) if *existing != fields => {
                return Err(sig_err(format!("conflicting tuple declarations for sort {sort}"), span, &origin));
            }
            _ => {
                th.tuples.insert(sort, fields);
            }
        }
    }
    th.sorts.insert(Sort::bool());
    for op in &th.ops {
        th.sorts.extend(op.args.iter().cloned());
        th.sorts.insert(op.result.clone());
    }
    for (s, fields) in &th.tuples {
        th.sorts.insert(s.clone());
        th.sorts.extend(fields.iter().map(|f| f.sort.clone()));
    }
    for (_, _, b) in &raw.blocks {
        th.sorts.extend(b.vars.iter().map(|v| v.sort.clone()));
    }

    // Native interpretations.
    for op in &mut th.ops {
        if let Some(i) = op.origins.iter().find_map(|o| native_for(o, &op.name, op.args.len())) {
            op.interp = i;
        }
    }
    for op in &th.ops {
        if op.interp == Interp::ObjValue {
            if let Some(obj) = op.args.first() {
                th.object_sorts.insert(obj.clone(), op.result.clone());
            }
        }
    }

    for (sort, names, span, origin) in raw.partitions {
        let mut ids = Vec::new();
        for n in &names {
            let Some(id) = th.find_op(n, std::slice::from_ref(&sort)) else {
                return Err(sig_err(
                    format!("partition observer `{n}` is not declared on sort {sort}"),
                    span,
                    &origin,
                ));
            };
            ids.push(id);
        }
        th.partitions.entry(sort).or_default().extend(ids);
    }
    for (sort, names) in raw.generators {
        th.generators.entry(sort).or_default().extend(names);
    }

    // Equations.
    let mut axioms = Vec::new();
    let mut lints = Vec::new();
    for (origin, kind, block) in &raw.blocks {
        let scope: Scope = block.vars.iter().map(|v| (v.name.clone(), v.sort.clone())).collect();
        for v in &block.vars {
            if !th.has_sort(&v.sort) {
                return Err(sig_err(format!("unknown sort {}", v.sort), v.span, origin));
            }
        }
        let mut el = Elaborator::new(&th);
        for eq in &block.equations {
            let wrap = |error| FlattenError::Elab {
                error,
                within: Some(origin.clone()),
            };
            let (lhs, rhs) = match &eq.rhs {
                None => (el.check_bool(&eq.lhs, &scope).map_err(wrap)?, None),
                Some(r) => {
                    let x = el.infer(&eq.lhs, &scope, None).map_err(wrap)?;
                    let y = el.check(r, &scope, &x.sort.clone()).map_err(wrap)?;
                    (x, Some(y))
                }
            };
            let text = match &eq.rhs {
                None => render_term(&eq.lhs),
                Some(r) => format!("{} == {}", render_term(&eq.lhs), render_term(r)),
            };
            axioms.push(Axiom {
                origin: origin.clone(),
                kind: *kind,
                text,
                lhs,
                rhs,
                status: AxiomStatus::Obligation,
                span: eq.span,
            });
        }
        lints.extend(el.lints);
    }
    th.lints.extend(lints);
    th.axioms = axioms;
    classify(&mut th);
    Ok(th)
}

enum Shape {
    Plain(OpId, Vec<Pattern>, Expr),
    Cond(OpId, Vec<Pattern>, Expr, Expr),
    Field(OpId, Vec<Pattern>, usize, Expr),
}

fn user_defined(th: &Theory, id: OpId) -> bool {
    th.op(id).interp == Interp::Undefined
}

fn app_patterns(th: &Theory, e: &Expr) -> Option<(OpId, Vec<Pattern>)> {
    match &e.kind {
        ExprKind::Op(id, args) if user_defined(th, *id) => {
            let pats = args.iter().map(Pattern::from_expr).collect::<Option<Vec<_>>>()?;
            Some((*id, pats))
        }
        _ => None,
    }
}

fn covered(pats: &[Pattern], exprs: &[&Expr]) -> bool {
    let mut bound = Vec::new();
    pats.iter().for_each(|p| p.vars(&mut bound));
    exprs.iter().all(|e| e.free_vars().iter().all(|v| bound.contains(v)))
}

fn shape(th: &Theory, ax: &Axiom) -> Option<Shape> {
    if ax.kind == AxiomKind::Implies {
        return None;
    }
    match (&ax.lhs.kind, &ax.rhs) {
        (_, Some(rhs)) if app_patterns(th, &ax.lhs).is_some() => {
            let (id, pats) = app_patterns(th, &ax.lhs)?;
            covered(&pats, &[rhs]).then(|| Shape::Plain(id, pats, rhs.clone()))
        }
        (ExprKind::Eq(l, r), Some(cond)) => {
            let (id, pats) = app_patterns(th, l)?;
            covered(&pats, &[r, cond]).then(|| Shape::Cond(id, pats, (**r).clone(), cond.clone()))
        }
        (ExprKind::Eq(l, r), None) => match &l.kind {
            ExprKind::Proj(inner, idx) => {
                let (id, pats) = app_patterns(th, inner)?;
                covered(&pats, &[r]).then(|| Shape::Field(id, pats, *idx, (**r).clone()))
            }
            _ => None,
        },
        _ => None,
    }
}

fn classify(th: &mut Theory) {
    let shapes: Vec<Option<Shape>> = th.axioms.iter().map(|a| shape(th, a)).collect();
    let mut rules: BTreeMap<OpId, Vec<(usize, Rule)>> = BTreeMap::new();
    let mut status = vec![AxiomStatus::Obligation; th.axioms.len()];

    // Plain rules: a later equation with the same left-hand side wins.
    for (i, s) in shapes.iter().enumerate() {
        let ax = &th.axioms[i];
        match s {
            Some(Shape::Plain(id, pats, rhs)) => {
                let list = rules.entry(*id).or_default();
                if let Some(pos) = list.iter().position(|(_, r)| r.cond.is_none() && r.lhs == *pats) {
                    let (old, _) = list.remove(pos);
                    status[old] = AxiomStatus::Overridden;
                }
                list.push((
                    i,
                    Rule {
                        lhs: pats.clone(),
                        rhs: rhs.clone(),
                        cond: None,
                        origin: ax.origin.clone(),
                        span: ax.span,
                    },
                ));
                status[i] = AxiomStatus::Rule;
            }
            Some(Shape::Cond(id, pats, rhs, cond)) => {
                rules.entry(*id).or_default().push((
                    i,
                    Rule {
                        lhs: pats.clone(),
                        rhs: rhs.clone(),
                        cond: Some(cond.clone()),
                        origin: ax.origin.clone(),
                        span: ax.span,
                    },
                ));
                status[i] = AxiomStatus::Rule;
            }
            _ => {}
        }
    }

    // Field-wise definitions `f(x).field = e` for every field synthesize a tuple rule.
    type Group = (OpId, Vec<Pattern>, Vec<(usize, usize, Expr)>);
    let mut groups: Vec<Group> = Vec::new();
    for (i, s) in shapes.iter().enumerate() {
        if let Some(Shape::Field(id, pats, idx, rhs)) = s {
            match groups.iter_mut().find(|(g, p, _)| g == id && p == pats) {
                Some((_, _, parts)) => parts.push((i, *idx, rhs.clone())),
                None => groups.push((*id, pats.clone(), vec![(i, *idx, rhs.clone())])),
            }
        }
    }
    for (id, pats, mut parts) in groups {
        let result = th.op(id).result.clone();
        let Some(fields) = th.tuples.get(&result) else { continue };
        parts.sort_by_key(|(_, idx, _)| *idx);
        let idxs: Vec<usize> = parts.iter().map(|(_, idx, _)| *idx).collect();
        if idxs != (0..fields.len()).collect::<Vec<_>>() {
            continue;
        }
        let first = parts[0].0;
        for (i, _, _) in &parts {
            status[*i] = AxiomStatus::Rule;
        }
        rules.entry(id).or_default().push((
            first,
            Rule {
                lhs: pats,
                rhs: Expr::new(ExprKind::Tuple(parts.into_iter().map(|(_, _, e)| e).collect()), result),
                cond: None,
                origin: th.axioms[first].origin.clone(),
                span: th.axioms[first].span,
            },
        ));
    }

    for (i, st) in status.into_iter().enumerate() {
        th.axioms[i].status = st;
    }
    for (id, mut list) in rules {
        list.sort_by_key(|(i, _)| *i);
        th.ops[id.0].interp = Interp::Rules(list.into_iter().map(|(_, r)| r).collect());
    }

    // Remaining user operators: environment constants and store-backed relations.
    let n = th.ops.len();
    for i in 0..n {
        if th.ops[i].interp != Interp::Undefined {
            continue;
        }
        let op = &th.ops[i];
        if op.args.is_empty() {
            th.ops[i].interp = Interp::Env;
        } else if op.args.len() == 1 && th.is_object_sort(&op.args[0]) {
            if let Some(elem) = th.element_sort(&op.result) {
                if th.is_object_sort(&elem) {
                    th.ops[i].interp = Interp::Relation;
                }
            }
        }
    }
    for i in 0..n {
        if th.ops[i].interp != Interp::Undefined {
            continue;
        }
        if let Some(rel) = find_inverse(th, OpId(i)) {
            th.ops[i].interp = Interp::Inverse(rel);
        }
    }
    for op in &th.ops {
        if op.interp == Interp::Undefined {
            let msg = if op.origins.iter().any(|o| o == "MutableObj") {
                format!("operator `{}` of the object model is not supported", op.name)
            } else {
                format!("operator `{}` has no defining equation; its applications cannot be evaluated", op.signature())
            };
            th.lints.push(Diagnostic::warning(op.span, msg));
        }
    }
}

/// Recognizes `g(z) = m == z in f(m)` for a relation `f`, making `g` its inverse.
fn find_inverse(th: &Theory, g: OpId) -> Option<OpId> {
    let op = th.op(g);
    if op.args.len() != 1 || !th.is_object_sort(&op.args[0]) || !th.is_object_sort(&op.result) {
        return None;
    }
    for ax in &th.axioms {
        let (ExprKind::Eq(l, r), Some(rhs)) = (&ax.lhs.kind, &ax.rhs) else { continue };
        let ExprKind::Op(lid, largs) = &l.kind else { continue };
        let (ExprKind::Var(m), [Expr { kind: ExprKind::Var(z), .. }]) = (&r.kind, largs.as_slice()) else {
            continue;
        };
        if *lid != g {
            continue;
        }
        let ExprKind::Op(in_id, in_args) = &rhs.kind else { continue };
        if th.op(*in_id).interp != Interp::Native(Native::In) || in_args.len() != 2 {
            continue;
        }
        let ExprKind::Var(z2) = &in_args[0].kind else { continue };
        let ExprKind::Op(f, fargs) = &in_args[1].kind else { continue };
        let [Expr { kind: ExprKind::Var(m2), .. }] = fargs.as_slice() else { continue };
        if z == z2 && m == m2 && th.op(*f).interp == Interp::Relation {
            return Some(*f);
        }
    }
    None
}
