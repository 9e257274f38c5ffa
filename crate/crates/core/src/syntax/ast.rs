//! Abstract syntax for the three specification tiers.
//!
//! Every node carries a [`Span`]; because spans compare equal to each other,
//! `==` on these types is structural equality modulo positions.

use crate::diag::Span;
use crate::sort::{ObjId, Sort};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub kind: TermKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TermKind {
    /// A bare identifier: a variable or a nullary operator.
    Id(String),
    /// Operator application; infix and prefix operators use their symbol as name.
    App(String, Vec<Term>),
    Int(i64),
    Str(String),
    /// `[a, b, c]` with optional `:Sort` ascription.
    Tuple(Vec<Term>, Option<Sort>),
    /// `t.field`
    Proj(Box<Term>, String),
    /// `x^`: value in the pre state.
    Pre(Box<Term>),
    /// `x'`: value in the post state.
    Post(Box<Term>),
    /// `x\st` where `st` names a state (`pre`, `post`, `any`) or a State variable.
    InState(Box<Term>, String),
    Forall(Vec<VarDecl>, Box<Term>),
    Ite(Box<Term>, Box<Term>, Box<Term>),
    /// `|s|`
    Card(Box<Term>),
    /// A store object; only produced at run time.
    Obj(ObjId, Sort),
}

impl Term {
    pub fn new(kind: TermKind, span: Span) -> Term {
        Term { kind, span }
    }

    pub fn id(name: impl Into<String>) -> Term {
        Term::new(TermKind::Id(name.into()), Span::default())
    }

    pub fn app(name: impl Into<String>, args: Vec<Term>) -> Term {
        Term::new(TermKind::App(name.into(), args), Span::default())
    }

    pub fn int(n: i64) -> Term {
        Term::new(TermKind::Int(n), Span::default())
    }

    pub fn truth() -> Term {
        Term::id("true")
    }

    pub fn is_true(&self) -> bool {
        matches!(&self.kind, TermKind::Id(n) if n == "true")
    }

    pub fn and(a: Term, b: Term) -> Term {
        if a.is_true() {
            return b;
        }
        if b.is_true() {
            return a;
        }
        Term::app("/\\", vec![a, b])
    }

    pub fn or(a: Term, b: Term) -> Term {
        Term::app("\\/", vec![a, b])
    }

    pub fn implies(a: Term, b: Term) -> Term {
        if b.is_true() {
            return b;
        }
        Term::app("=>", vec![a, b])
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Term) -> Term {
        Term::app("~", vec![a])
    }

    pub fn conj(terms: impl IntoIterator<Item = Term>) -> Term {
        terms.into_iter().fold(Term::truth(), Term::and)
    }

    /// Top-level conjuncts of a Boolean term.
    pub fn conjuncts(&self) -> Vec<&Term> {
        match &self.kind {
            TermKind::App(op, args) if op == "/\\" && args.len() == 2 => {
                let mut out = args[0].conjuncts();
                out.extend(args[1].conjuncts());
                out
            }
            _ => vec![self],
        }
    }

    /// Calls `f` on every subterm, this one included, in pre-order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Term)) {
        f(self);
        match &self.kind {
            TermKind::App(_, args) | TermKind::Tuple(args, _) => {
                for a in args {
                    a.visit(f);
                }
            }
            TermKind::Proj(t, _)
            | TermKind::Pre(t)
            | TermKind::Post(t)
            | TermKind::InState(t, _)
            | TermKind::Forall(_, t)
            | TermKind::Card(t) => t.visit(f),
            TermKind::Ite(c, a, b) => {
                c.visit(f);
                a.visit(f);
                b.visit(f);
            }
            TermKind::Id(_) | TermKind::Int(_) | TermKind::Str(_) | TermKind::Obj(..) => {}
        }
    }

    /// Names applied as operators anywhere in the term (including bare identifiers).
    pub fn symbols(&self) -> Vec<(String, Span)> {
        let mut out = Vec::new();
        self.visit(&mut |t| match &t.kind {
            TermKind::App(n, _) | TermKind::Id(n) => out.push((n.clone(), t.span)),
            _ => {}
        });
        out
    }

    pub fn mentions_id(&self, name: &str) -> bool {
        let mut found = false;
        self.visit(&mut |t| {
            if matches!(&t.kind, TermKind::Id(n) if n == name) {
                found = true;
            }
        });
        found
    }

    /// Capture-naive substitution of identifiers; quantifiers shadow their variables.
    pub fn substitute(&self, map: &std::collections::BTreeMap<String, Term>) -> Term {
        let kind = match &self.kind {
            TermKind::Id(n) => match map.get(n) {
                Some(t) => return t.clone(),
                None => TermKind::Id(n.clone()),
            },
            TermKind::App(n, args) => {
                TermKind::App(n.clone(), args.iter().map(|a| a.substitute(map)).collect())
            }
            TermKind::Tuple(args, s) => {
                TermKind::Tuple(args.iter().map(|a| a.substitute(map)).collect(), s.clone())
            }
            TermKind::Proj(t, f) => TermKind::Proj(Box::new(t.substitute(map)), f.clone()),
            TermKind::Pre(t) => TermKind::Pre(Box::new(t.substitute(map))),
            TermKind::Post(t) => TermKind::Post(Box::new(t.substitute(map))),
            TermKind::InState(t, st) => {
                let st = match map.get(st).map(|t| &t.kind) {
                    Some(TermKind::Id(n)) => n.clone(),
                    _ => st.clone(),
                };
                TermKind::InState(Box::new(t.substitute(map)), st)
            }
            TermKind::Forall(vars, body) => {
                let mut inner = map.clone();
                for v in vars {
                    inner.remove(&v.name);
                }
                TermKind::Forall(vars.clone(), Box::new(body.substitute(&inner)))
            }
            TermKind::Ite(c, a, b) => TermKind::Ite(
                Box::new(c.substitute(map)),
                Box::new(a.substitute(map)),
                Box::new(b.substitute(map)),
            ),
            TermKind::Card(t) => TermKind::Card(Box::new(t.substitute(map))),
            k @ (TermKind::Int(_) | TermKind::Str(_) | TermKind::Obj(..)) => k.clone(),
        };
        Term::new(kind, self.span)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub sort: Sort,
    pub span: Span,
}

// ---------------------------------------------------------------------------
// Tier 1: traits

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fixity {
    /// `name : ...`
    Plain,
    /// `op __ : ...`
    Prefix,
    /// `__ op __ : ...`
    Infix,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpDecl {
    pub name: String,
    pub fixity: Fixity,
    pub args: Vec<Sort>,
    pub result: Sort,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub sort: Sort,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleDecl {
    pub sort: Sort,
    pub fields: Vec<Field>,
    pub span: Span,
}

/// One actual parameter of an `includes` item.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Actual {
    Positional(Sort),
    /// `new for old`
    Rename { new: Sort, old: Sort },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Include {
    pub trait_name: String,
    pub actuals: Vec<Actual>,
    pub span: Span,
}

/// `lhs == rhs`, or a bare Boolean `lhs` meaning `lhs == true`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Equation {
    pub lhs: Term,
    pub rhs: Option<Term>,
    pub span: Span,
}

/// Equations sharing one `forall` variable declaration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EqBlock {
    pub vars: Vec<VarDecl>,
    pub equations: Vec<Equation>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortOps {
    pub sort: Sort,
    pub ops: Vec<String>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraitUnit {
    pub name: String,
    pub params: Vec<String>,
    pub includes: Vec<Include>,
    pub tuples: Vec<TupleDecl>,
    pub introduces: Vec<OpDecl>,
    pub partitions: Vec<SortOps>,
    pub generators: Vec<SortOps>,
    pub asserts: Vec<EqBlock>,
    pub implies: Vec<EqBlock>,
    pub span: Span,
}

// ---------------------------------------------------------------------------
// Tier 2: role specifications

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub sort: Option<Sort>,
    pub span: Span,
}

/// Spelling of the constructor marker; the misspelled form is accepted with a lint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstructsKw {
    Constructs,
    Contructs,
}

impl ConstructsKw {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstructsKw::Constructs => "constructs",
            ConstructsKw::Contructs => "contructs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodSpec {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Option<Sort>,
    pub constructs: Option<ConstructsKw>,
    pub requires: Option<Term>,
    pub modifies: Vec<Term>,
    pub ensures: Term,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleUnit {
    pub name: String,
    pub uses: String,
    pub uses_span: Span,
    pub methods: Vec<MethodSpec>,
    pub span: Span,
}

// ---------------------------------------------------------------------------
// Tier 3: interaction specifications

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Action {
    pub kind: ActionKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ActionKind {
    /// `e.m(args)`; a missing receiver means `self`.
    Invoke {
        receiver: Option<Term>,
        method: String,
        args: Vec<Term>,
    },
    Seq(Box<Action>, Box<Action>),
    Indep(Box<Action>, Box<Action>),
    Choice(Box<Action>, Box<Action>),
    /// `|_ v in set _| body`
    DistIndep {
        var: String,
        set: Term,
        body: Box<Action>,
    },
    /// `[]_ v in set _[] body`
    DistChoice {
        var: String,
        set: Term,
        body: Box<Action>,
    },
    Let {
        var: String,
        sort: Sort,
        source: LetSource,
        body: Box<Action>,
    },
    If {
        guard: Term,
        body: Box<Action>,
    },
    While {
        guard: Term,
        body: Box<Action>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LetSource {
    /// A value-returning invocation.
    Invoke(Box<Action>),
    /// A tier-1 term (yielder); a bare call may later resolve to a self invocation.
    Term(Term),
}

impl Action {
    pub fn new(kind: ActionKind, span: Span) -> Action {
        Action { kind, span }
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Action)) {
        f(self);
        match &self.kind {
            ActionKind::Invoke { .. } => {}
            ActionKind::Seq(a, b) | ActionKind::Indep(a, b) | ActionKind::Choice(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            ActionKind::DistIndep { body, .. }
            | ActionKind::DistChoice { body, .. }
            | ActionKind::If { body, .. }
            | ActionKind::While { body, .. } => body.visit(f),
            ActionKind::Let { source, body, .. } => {
                if let LetSource::Invoke(a) = source {
                    a.visit(f);
                }
                body.visit(f);
            }
        }
    }

    /// Every term appearing in this action tree.
    pub fn terms(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        self.visit(&mut |a| match &a.kind {
            ActionKind::Invoke { receiver, args, .. } => {
                out.extend(receiver.iter());
                out.extend(args.iter());
            }
            ActionKind::DistIndep { set, .. } | ActionKind::DistChoice { set, .. } => out.push(set),
            ActionKind::If { guard, .. } | ActionKind::While { guard, .. } => out.push(guard),
            ActionKind::Let {
                source: LetSource::Term(t),
                ..
            } => out.push(t),
            _ => {}
        });
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodDef {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Action,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDef {
    pub name: String,
    pub methods: Vec<MethodDef>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionUnit {
    pub name: String,
    pub classes: Vec<ClassDef>,
    pub span: Span,
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum UnitKind {
    Trait,
    Role,
    Interaction,
}

impl UnitKind {
    pub fn extension(self) -> &'static str {
        match self {
            UnitKind::Trait => "trait",
            UnitKind::Role => "role",
            UnitKind::Interaction => "inter",
        }
    }

    pub fn from_extension(ext: &str) -> Option<UnitKind> {
        match ext {
            "trait" => Some(UnitKind::Trait),
            "role" => Some(UnitKind::Role),
            "inter" => Some(UnitKind::Interaction),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SourceUnit {
    Trait(TraitUnit),
    Role(RoleUnit),
    Interaction(InteractionUnit),
}

impl SourceUnit {
    pub fn name(&self) -> &str {
        match self {
            SourceUnit::Trait(t) => &t.name,
            SourceUnit::Role(r) => &r.name,
            SourceUnit::Interaction(i) => &i.name,
        }
    }

    pub fn kind(&self) -> UnitKind {
        match self {
            SourceUnit::Trait(_) => UnitKind::Trait,
            SourceUnit::Role(_) => UnitKind::Role,
            SourceUnit::Interaction(_) => UnitKind::Interaction,
        }
    }
}
