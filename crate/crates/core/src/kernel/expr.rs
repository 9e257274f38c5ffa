//! Sort checking: elaboration of surface terms into sorted expressions.

use thiserror::Error;

use crate::diag::{Diagnostic, Span};
use crate::kernel::theory::{Interp, OpId, Theory};
use crate::kernel::value::{StateTag, Value};
use crate::sort::Sort;
use crate::syntax::ast::{Fixity, Term, TermKind};

/// A sort-checked expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub sort: Sort,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprKind {
    Var(String),
    Lit(Value),
    Op(OpId, Vec<Expr>),
    /// Equality decided through partitions and tuple fields.
    Eq(Box<Expr>, Box<Expr>),
    Neq(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
    Iff(Box<Expr>, Box<Expr>),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
    Tuple(Vec<Expr>),
    Proj(Box<Expr>, usize),
    Forall(Vec<(String, Sort)>, Box<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind, sort: Sort) -> Expr {
        Expr { kind, sort }
    }

    pub fn lit(v: Value, sort: Sort) -> Expr {
        Expr::new(ExprKind::Lit(v), sort)
    }

    pub fn var(name: impl Into<String>, sort: Sort) -> Expr {
        Expr::new(ExprKind::Var(name.into()), sort)
    }

    pub fn children(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::Var(_) | ExprKind::Lit(_) => vec![],
            ExprKind::Op(_, args) | ExprKind::Tuple(args) => args.iter().collect(),
            ExprKind::Eq(a, b)
            | ExprKind::Neq(a, b)
            | ExprKind::And(a, b)
            | ExprKind::Or(a, b)
            | ExprKind::Implies(a, b)
            | ExprKind::Iff(a, b) => vec![a, b],
            ExprKind::Not(a) | ExprKind::Proj(a, _) | ExprKind::Forall(_, a) => vec![a],
            ExprKind::Ite(c, a, b) => vec![c, a, b],
        }
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Operators applied anywhere in the expression.
    pub fn ops(&self) -> Vec<OpId> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let ExprKind::Op(id, _) = &e.kind {
                out.push(*id);
            }
        });
        out
    }

    /// Free variables, in first-occurrence order.
    pub fn free_vars(&self) -> Vec<String> {
        fn go(e: &Expr, bound: &mut Vec<String>, out: &mut Vec<String>) {
            match &e.kind {
                ExprKind::Var(v) => {
                    if !bound.contains(v) && !out.contains(v) {
                        out.push(v.clone());
                    }
                }
                ExprKind::Forall(vars, body) => {
                    let n = bound.len();
                    bound.extend(vars.iter().map(|(v, _)| v.clone()));
                    go(body, bound, out);
                    bound.truncate(n);
                }
                _ => {
                    for c in e.children() {
                        go(c, bound, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn conjuncts(&self) -> Vec<&Expr> {
        match &self.kind {
            ExprKind::And(a, b) => {
                let mut out = a.conjuncts();
                out.extend(b.conjuncts());
                out
            }
            _ => vec![self],
        }
    }

    /// Renders the expression in surface syntax.
    pub fn show(&self, theory: &Theory) -> String {
        let mut out = String::new();
        show(self, theory, &mut out);
        out
    }
}

fn show(e: &Expr, th: &Theory, out: &mut String) {
    let bin = |a: &Expr, op: &str, b: &Expr, out: &mut String| {
        out.push('(');
        show(a, th, out);
        out.push_str(&format!(" {op} "));
        show(b, th, out);
        out.push(')');
    };
    match &e.kind {
        ExprKind::Var(v) => out.push_str(v),
        ExprKind::Lit(v) => out.push_str(&v.to_string()),
        ExprKind::Op(id, args) => {
            let op = th.op(*id);
            match (op.fixity, args.len()) {
                (Fixity::Infix, 2) => bin(&args[0], &op.name, &args[1], out),
                (Fixity::Prefix, 1) => {
                    out.push_str(&op.name);
                    show(&args[0], th, out);
                }
                _ => {
                    out.push_str(&op.name);
                    if !args.is_empty() {
                        out.push('(');
                        for (i, a) in args.iter().enumerate() {
                            if i > 0 {
                                out.push_str(", ");
                            }
                            show(a, th, out);
                        }
                        out.push(')');
                    }
                }
            }
        }
        ExprKind::Eq(a, b) => bin(a, "=", b, out),
        ExprKind::Neq(a, b) => bin(a, "~=", b, out),
        ExprKind::And(a, b) => bin(a, "/\\", b, out),
        ExprKind::Or(a, b) => bin(a, "\\/", b, out),
        ExprKind::Implies(a, b) => bin(a, "=>", b, out),
        ExprKind::Iff(a, b) => bin(a, "<=>", b, out),
        ExprKind::Not(a) => {
            out.push('~');
            show(a, th, out);
        }
        ExprKind::Ite(c, a, b) => {
            out.push_str("(if ");
            show(c, th, out);
            out.push_str(" then ");
            show(a, th, out);
            out.push_str(" else ");
            show(b, th, out);
            out.push(')');
        }
        ExprKind::Tuple(fields) => {
            out.push('[');
            for (i, a) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                show(a, th, out);
            }
            out.push(']');
        }
        ExprKind::Proj(t, idx) => {
            show(t, th, out);
            let name = th.tuples.get(&t.sort).and_then(|f| f.get(*idx)).map(|f| f.name.as_str()).unwrap_or("?");
            out.push('.');
            out.push_str(name);
        }
        ExprKind::Forall(vars, body) => {
            out.push_str("(forall ");
            for (i, (v, s)) in vars.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&format!("{v} : {s}"));
            }
            out.push_str(" (");
            show(body, th, out);
            out.push_str("))");
        }
    }
}

/// A sort-checking failure, positioned at the offending subterm.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{span}: {message}")]
pub struct ElabError {
    pub span: Span,
    pub message: String,
}

impl ElabError {
    pub fn new(span: Span, message: impl Into<String>) -> ElabError {
        ElabError {
            span,
            message: message.into(),
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic::error(self.span, self.message.clone())
    }
}

/// Typed variables visible to a term, innermost last.
pub type Scope = Vec<(String, Sort)>;

/// Sort-checks terms against a theory, resolving overloads by argument sorts.
pub struct Elaborator<'t> {
    pub theory: &'t Theory,
    pub lints: Vec<Diagnostic>,
}

fn text(t: &Term) -> String {
    crate::syntax::render_term(t)
}

impl<'t> Elaborator<'t> {
    pub fn new(theory: &'t Theory) -> Elaborator<'t> {
        Elaborator {
            theory,
            lints: Vec::new(),
        }
    }

    pub fn check_bool(&mut self, t: &Term, scope: &Scope) -> Result<Expr, ElabError> {
        self.check(t, scope, &Sort::bool())
    }

    pub fn check(&mut self, t: &Term, scope: &Scope, sort: &Sort) -> Result<Expr, ElabError> {
        let e = self.infer(t, scope, Some(sort))?;
        if &e.sort != sort {
            return Err(ElabError::new(
                t.span,
                format!("`{}` has sort {}, expected {sort}", text(t), e.sort),
            ));
        }
        Ok(e)
    }

    /// Elaborates `t`, using `expected` only as a hint for overloads and tuple literals.
    pub fn infer(&mut self, t: &Term, scope: &Scope, expected: Option<&Sort>) -> Result<Expr, ElabError> {
        let th = self.theory;
        match &t.kind {
            TermKind::Id(name) => {
                if let Some((_, s)) = scope.iter().rev().find(|(v, _)| v == name) {
                    return Ok(Expr::var(name.clone(), s.clone()));
                }
                match name.as_str() {
                    "true" => return Ok(Expr::lit(Value::Bool(true), Sort::bool())),
                    "false" => return Ok(Expr::lit(Value::Bool(false), Sort::bool())),
                    _ => {}
                }
                let all: Vec<OpId> = th.ops_named(name).collect();
                let nullary: Vec<OpId> = all.iter().copied().filter(|id| th.op(*id).args.is_empty()).collect();
                if nullary.is_empty() {
                    if let Some(tag) = StateTag::from_name(name) {
                        return Ok(Expr::lit(Value::State(tag), Sort::state()));
                    }
                    if let Some(id) = all.first() {
                        let n = th.op(*id).args.len();
                        return Err(ElabError::new(t.span, format!("`{name}` expects {n} argument(s), got 0")));
                    }
                    return Err(ElabError::new(t.span, format!("unknown identifier `{name}`")));
                }
                let pick = match expected {
                    Some(exp) => nullary.iter().copied().find(|id| &th.op(*id).result == exp).unwrap_or(nullary[0]),
                    None => {
                        let first = &th.op(nullary[0]).result;
                        if nullary.iter().any(|id| &th.op(*id).result != first) {
                            return Err(ElabError::new(t.span, format!("ambiguous constant `{name}`")));
                        }
                        nullary[0]
                    }
                };
                Ok(Expr::new(ExprKind::Op(pick, vec![]), th.op(pick).result.clone()))
            }
            TermKind::App(name, args) => self.app(t, name, args, scope, expected),
            TermKind::Int(n) => Ok(Expr::lit(Value::Int(*n), Sort::int())),
            TermKind::Str(s) => Ok(Expr::lit(Value::Str(s.clone()), Sort::string())),
            TermKind::Tuple(fields, asc) => {
                let target = match asc {
                    Some(s) => s.clone(),
                    None => match expected {
                        Some(s) if th.tuples.get(s).is_some_and(|f| f.len() == fields.len()) => s.clone(),
                        _ => {
                            let cands: Vec<&Sort> =
                                th.tuples.iter().filter(|(_, f)| f.len() == fields.len()).map(|(s, _)| s).collect();
                            if cands.len() != 1 {
                                return Err(ElabError::new(
                                    t.span,
                                    "cannot infer the sort of this tuple literal; add `:Sort`",
                                ));
                            }
                            cands[0].clone()
                        }
                    },
                };
                let Some(decl) = th.tuples.get(&target) else {
                    return Err(ElabError::new(t.span, format!("sort {target} is not a tuple sort")));
                };
                if decl.len() != fields.len() {
                    return Err(ElabError::new(
                        t.span,
                        format!("tuple sort {target} has {} fields, literal has {}", decl.len(), fields.len()),
                    ));
                }
                let decl = decl.clone();
                let mut out = Vec::new();
                for (f, d) in fields.iter().zip(&decl) {
                    out.push(self.check(f, scope, &d.sort)?);
                }
                Ok(Expr::new(ExprKind::Tuple(out), target))
            }
            TermKind::Proj(inner, field) => {
                let e = self.infer(inner, scope, None)?;
                let Some(decl) = th.tuples.get(&e.sort) else {
                    return Err(ElabError::new(
                        t.span,
                        format!("projection `.{field}` on `{}` of non-tuple sort {}", text(inner), e.sort),
                    ));
                };
                let Some(idx) = decl.iter().position(|f| &f.name == field) else {
                    return Err(ElabError::new(t.span, format!("sort {} has no field `{field}`", e.sort)));
                };
                let sort = decl[idx].sort.clone();
                Ok(Expr::new(ExprKind::Proj(Box::new(e), idx), sort))
            }
            TermKind::Pre(inner) => self.in_state(t, inner, Expr::lit(Value::State(StateTag::Pre), Sort::state()), true, scope),
            TermKind::Post(inner) => {
                self.in_state(t, inner, Expr::lit(Value::State(StateTag::Post), Sort::state()), true, scope)
            }
            TermKind::InState(inner, st) => {
                let st_expr = if let Some((_, s)) = scope.iter().rev().find(|(v, _)| v == st) {
                    if !s.is("State") {
                        return Err(ElabError::new(t.span, format!("`{st}` has sort {s}, expected State")));
                    }
                    Expr::var(st.clone(), Sort::state())
                } else if let Some(tag) = StateTag::from_name(st) {
                    Expr::lit(Value::State(tag), Sort::state())
                } else {
                    return Err(ElabError::new(t.span, format!("unknown state `{st}`")));
                };
                self.in_state(t, inner, st_expr, false, scope)
            }
            TermKind::Forall(vars, body) => {
                let mut inner = scope.clone();
                for v in vars {
                    self.check_sort_exists(&v.sort, v.span)?;
                    inner.push((v.name.clone(), v.sort.clone()));
                }
                let b = self.check_bool(body, &inner)?;
                Ok(Expr::new(
                    ExprKind::Forall(vars.iter().map(|v| (v.name.clone(), v.sort.clone())).collect(), Box::new(b)),
                    Sort::bool(),
                ))
            }
            TermKind::Ite(c, a, b) => {
                let c = self.check_bool(c, scope)?;
                let a = self.infer(a, scope, expected)?;
                let b = self.check(b, scope, &a.sort.clone())?;
                let sort = a.sort.clone();
                Ok(Expr::new(ExprKind::Ite(Box::new(c), Box::new(a), Box::new(b)), sort))
            }
            TermKind::Card(inner) => {
                let e = self.infer(inner, scope, None)?;
                let Some(size) = th.ops_named("size").find(|id| th.op(*id).args == [e.sort.clone()]) else {
                    return Err(ElabError::new(t.span, format!("no `size` operator for sort {}", e.sort)));
                };
                Ok(Expr::new(ExprKind::Op(size, vec![e]), th.op(size).result.clone()))
            }
            TermKind::Obj(id, sort) => Ok(Expr::lit(Value::Obj(*id, sort.clone()), sort.clone())),
        }
    }

    fn check_sort_exists(&self, sort: &Sort, span: Span) -> Result<(), ElabError> {
        if self.theory.has_sort(sort) {
            Ok(())
        } else {
            Err(ElabError::new(span, format!("unknown sort {sort}")))
        }
    }

    fn in_state(&mut self, t: &Term, inner: &Term, st: Expr, lenient: bool, scope: &Scope) -> Result<Expr, ElabError> {
        let e = self.infer(inner, scope, None)?;
        match self.theory.bang_for(&e.sort) {
            Some(bang) => {
                let sort = self.theory.op(bang).result.clone();
                Ok(Expr::new(ExprKind::Op(bang, vec![e, st]), sort))
            }
            // Values other than objects do not depend on the state.
            None if lenient => Ok(e),
            None => Err(ElabError::new(
                t.span,
                format!("`{}` has sort {}, which is not an object sort", text(inner), e.sort),
            )),
        }
    }

    fn binary_bool(&mut self, a: &Term, b: &Term, scope: &Scope) -> Result<(Box<Expr>, Box<Expr>), ElabError> {
        Ok((Box::new(self.check_bool(a, scope)?), Box::new(self.check_bool(b, scope)?)))
    }

    fn app(
        &mut self,
        t: &Term,
        name: &str,
        args: &[Term],
        scope: &Scope,
        expected: Option<&Sort>,
    ) -> Result<Expr, ElabError> {
        let b = Sort::bool();
        match (name, args.len()) {
            ("/\\", 2) => {
                let (x, y) = self.binary_bool(&args[0], &args[1], scope)?;
                return Ok(Expr::new(ExprKind::And(x, y), b));
            }
            ("\\/", 2) => {
                let (x, y) = self.binary_bool(&args[0], &args[1], scope)?;
                return Ok(Expr::new(ExprKind::Or(x, y), b));
            }
            ("=>", 2) => {
                let (x, y) = self.binary_bool(&args[0], &args[1], scope)?;
                return Ok(Expr::new(ExprKind::Implies(x, y), b));
            }
            ("<=>", 2) => {
                let (x, y) = self.binary_bool(&args[0], &args[1], scope)?;
                return Ok(Expr::new(ExprKind::Iff(x, y), b));
            }
            ("~", 1) => {
                let x = self.check_bool(&args[0], scope)?;
                return Ok(Expr::new(ExprKind::Not(Box::new(x)), b));
            }
            ("=", 2) | ("~=", 2) => {
                let (x, y) = self.equality(&args[0], &args[1], scope)?;
                let kind = if name == "=" { ExprKind::Eq(x, y) } else { ExprKind::Neq(x, y) };
                return Ok(Expr::new(kind, b));
            }
            _ => {}
        }
        let th = self.theory;
        let all: Vec<OpId> = th.ops_named(name).collect();
        if all.is_empty() {
            return Err(ElabError::new(t.span, format!("unknown operator `{name}`")));
        }
        let cands: Vec<OpId> = all.iter().copied().filter(|id| th.op(*id).args.len() == args.len()).collect();
        if cands.is_empty() {
            if args.len() == 1 && all.len() == 1 && th.op(all[0]).args.is_empty() {
                let result = th.op(all[0]).result.clone();
                let arg = self.infer(&args[0], scope, Some(&result))?;
                if arg.sort == result {
                    self.lints.push(Diagnostic::warning(
                        t.span,
                        format!(
                            "`{name}` is declared without arguments; `{}` is read as the value of its argument",
                            text(t)
                        ),
                    ));
                    return Ok(arg);
                }
            }
            let n = th.op(all[0]).args.len();
            return Err(ElabError::new(
                t.span,
                format!("`{name}` expects {n} argument(s), got {}", args.len()),
            ));
        }
        if cands.len() == 1 {
            return self.apply(cands[0], args, scope);
        }
        let mut oks = Vec::new();
        let mut errors = Vec::new();
        for c in &cands {
            let mark = self.lints.len();
            match self.apply(*c, args, scope) {
                Ok(e) => oks.push(e),
                Err(e) => {
                    self.lints.truncate(mark);
                    errors.push(e);
                }
            }
        }
        if oks.len() > 1 {
            if let Some(exp) = expected {
                if oks.iter().any(|e| &e.sort == exp) {
                    oks.retain(|e| &e.sort == exp);
                }
            }
        }
        match oks.len() {
            1 => Ok(oks.pop().unwrap()),
            0 => {
                let sorts: Result<Vec<String>, ElabError> = args
                    .iter()
                    .map(|a| {
                        let mark = self.lints.len();
                        let r = self.infer(a, scope, None).map(|e| e.sort.to_string());
                        self.lints.truncate(mark);
                        r
                    })
                    .collect();
                match sorts {
                    Ok(sorts) => Err(ElabError::new(
                        t.span,
                        format!("no declaration of `{name}` accepts arguments of sorts ({})", sorts.join(", ")),
                    )),
                    Err(_) => Err(errors.swap_remove(0)),
                }
            }
            _ => Err(ElabError::new(t.span, format!("ambiguous use of overloaded operator `{name}`"))),
        }
    }

    fn apply(&mut self, id: OpId, args: &[Term], scope: &Scope) -> Result<Expr, ElabError> {
        let op = self.theory.op(id);
        let mut out = Vec::with_capacity(args.len());
        for (i, (a, want)) in args.iter().zip(&op.args).enumerate() {
            let e = self.infer(a, scope, Some(want))?;
            if &e.sort != want {
                return Err(ElabError::new(
                    a.span,
                    format!("argument {} of `{}` has sort {}, expected {want}", i + 1, op.name, e.sort),
                ));
            }
            out.push(e);
        }
        Ok(Expr::new(ExprKind::Op(id, out), op.result.clone()))
    }

    fn equality(&mut self, a: &Term, b: &Term, scope: &Scope) -> Result<(Box<Expr>, Box<Expr>), ElabError> {
        let mark = self.lints.len();
        let (x, y) = match self.infer(a, scope, None) {
            Ok(x) => {
                let y = self.check(b, scope, &x.sort.clone())?;
                (x, y)
            }
            Err(first) => {
                self.lints.truncate(mark);
                let Ok(y) = self.infer(b, scope, None) else {
                    return Err(first);
                };
                let x = self.check(a, scope, &y.sort.clone())?;
                (x, y)
            }
        };
        Ok((Box::new(x), Box::new(y)))
    }

    /// True when the expression reads object values, relations or states.
    pub fn is_stateful(&self, e: &Expr) -> bool {
        let mut found = false;
        e.visit(&mut |x| match &x.kind {
            ExprKind::Op(id, _) => {
                if matches!(
                    self.theory.op(*id).interp,
                    Interp::ObjValue | Interp::Relation | Interp::Inverse(_) | Interp::StateConst(_)
                ) {
                    found = true;
                }
            }
            ExprKind::Lit(Value::State(_)) => found = true,
            ExprKind::Var(_) if x.sort.is("State") => found = true,
            _ => {}
        });
        found
    }
}
