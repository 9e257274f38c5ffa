//! Tier 2: role contracts bound to theories, clause evaluation, frames and categories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::diag::{Diagnostic, Span};
use crate::kernel::eval::{Bindings, EvalError, Evaluator, World};
use crate::kernel::expr::{Elaborator, Expr, ExprKind, Scope};
use crate::kernel::theory::{Interp, Native, Theory};
use crate::kernel::value::{StateTag, Value};
use crate::sort::{ObjId, Sort};
use crate::store::Store;
use crate::syntax::ast::{ConstructsKw, MethodSpec, RoleUnit, Term};
use crate::syntax::render_term;

/// One item of a `modifies` clause, evaluated in the pre state.
#[derive(Clone, Debug)]
pub enum FrameItem {
    /// A single object.
    Object(Expr),
    /// The relation slot `rel(holder)`, such as `zonalClocksOf(self)`.
    Slot { rel: String, holder: Expr },
    /// Every object in a set, such as `containedObjects(s, pre)`.
    Contained(Expr),
}

#[derive(Clone, Debug)]
pub struct MethodContract {
    pub name: String,
    pub params: Vec<(String, Sort)>,
    pub ret: Option<Sort>,
    pub constructs: bool,
    pub requires: Option<Expr>,
    pub modifies: Vec<FrameItem>,
    pub ensures: Expr,
    /// Source forms, kept for derived contracts and messages.
    pub requires_term: Option<Term>,
    pub ensures_term: Term,
    pub span: Span,
}

impl MethodContract {
    pub fn requires_text(&self) -> String {
        self.requires_term.as_ref().map(render_term).unwrap_or_else(|| "true".into())
    }

    pub fn ensures_text(&self) -> String {
        render_term(&self.ensures_term)
    }
}

/// A role specification whose clauses have been sort-checked against its trait.
#[derive(Clone, Debug)]
pub struct BoundRole {
    pub name: String,
    pub sort: Sort,
    pub theory: Arc<Theory>,
    pub methods: Vec<MethodContract>,
    pub lints: Vec<Diagnostic>,
}

impl BoundRole {
    pub fn method(&self, name: &str) -> Option<&MethodContract> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// Categorizes every method in declaration order.
    pub fn categories(&self) -> Vec<(String, Result<Category, String>)> {
        self.methods
            .iter()
            .map(|m| (m.name.clone(), categorize(&self.theory, m)))
            .collect()
    }
}

fn flatten_frame(t: &Term, out: &mut Vec<Term>) {
    match &t.kind {
        crate::syntax::ast::TermKind::App(op, args) if op == "/\\" => {
            for a in args {
                flatten_frame(a, out);
            }
        }
        _ => out.push(t.clone()),
    }
}

fn bind_frame_item(el: &mut Elaborator, t: &Term, scope: &Scope) -> Result<FrameItem, Diagnostic> {
    let th = el.theory;
    let e = el.infer(t, scope, None).map_err(|e| e.to_diagnostic())?;
    if let ExprKind::Op(id, args) = &e.kind {
        if th.op(*id).interp == Interp::Relation && args.len() == 1 {
            return Ok(FrameItem::Slot {
                rel: th.op(*id).name.clone(),
                holder: args[0].clone(),
            });
        }
    }
    if th.is_object_sort(&e.sort) {
        return Ok(FrameItem::Object(e));
    }
    if th.element_sort(&e.sort).is_some_and(|s| th.is_object_sort(&s)) {
        return Ok(FrameItem::Contained(e));
    }
    Err(Diagnostic::error(
        t.span,
        format!("`{}` in modifies does not denote objects (sort {})", render_term(t), e.sort),
    ))
}

fn bind_method(th: &Theory, role: &RoleUnit, sort: &Sort, m: &MethodSpec, lints: &mut Vec<Diagnostic>) -> Result<MethodContract, Vec<Diagnostic>> {
    let mut errors = Vec::new();
    let mut scope: Scope = vec![("self".into(), sort.clone())];
    let mut params = Vec::new();
    for p in &m.params {
        match &p.sort {
            Some(s) if th.has_sort(s) => {
                scope.push((p.name.clone(), s.clone()));
                params.push((p.name.clone(), s.clone()));
            }
            Some(s) => errors.push(Diagnostic::error(p.span, format!("unknown sort {s} for parameter `{}`", p.name))),
            None => errors.push(Diagnostic::error(
                p.span,
                format!("parameter `{}` of `{}` needs a sort (`{}: Sort`)", p.name, m.name, p.name),
            )),
        }
    }
    if let Some(r) = &m.ret {
        if !th.has_sort(r) {
            errors.push(Diagnostic::error(m.span, format!("unknown return sort {r} of `{}`", m.name)));
        }
        scope.push(("result".into(), r.clone()));
    } else if m.ensures.mentions_id("result") || m.requires.as_ref().is_some_and(|r| r.mentions_id("result")) {
        errors.push(Diagnostic::error(m.span, format!("`result` used in `{}`, which returns no value", m.name)));
    }
    if let Some(kw) = m.constructs {
        if m.name != role.name || m.ret.is_some() {
            errors.push(Diagnostic::error(
                m.span,
                format!("`{}` is not a constructor of {}, but carries `{}`", m.name, role.name, kw.as_str()),
            ));
        }
        if kw == ConstructsKw::Contructs {
            lints.push(Diagnostic::warning(m.span, format!("`contructs` in `{}` is read as `constructs`", m.name)));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let mut el = Elaborator::new(th);
    if let Some(r) = &m.requires {
        if r.mentions_id("result") {
            errors.push(Diagnostic::error(r.span, "`result` is not available in a requires clause"));
        }
    }
    let requires = match &m.requires {
        Some(r) => {
            let pre_scope: Scope = scope.iter().filter(|(v, _)| v != "result").cloned().collect();
            match el.check_bool(r, &pre_scope) {
                Ok(e) => Some(e),
                Err(e) => {
                    errors.push(e.to_diagnostic());
                    None
                }
            }
        }
        None => None,
    };
    let mut items = Vec::new();
    for t in &m.modifies {
        flatten_frame(t, &mut items);
    }
    let mut modifies = Vec::new();
    for t in &items {
        match bind_frame_item(&mut el, t, &scope) {
            Ok(i) => modifies.push(i),
            Err(d) => errors.push(d),
        }
    }
    let ensures = match el.check_bool(&m.ensures, &scope) {
        Ok(e) => Some(e),
        Err(e) => {
            errors.push(e.to_diagnostic());
            None
        }
    };
    lints.append(&mut el.lints);
    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(MethodContract {
        name: m.name.clone(),
        params,
        ret: m.ret.clone(),
        constructs: m.constructs.is_some(),
        requires,
        modifies,
        ensures: ensures.expect("checked above"),
        requires_term: m.requires.clone(),
        ensures_term: m.ensures.clone(),
        span: m.span,
    })
}

/// Sort-checks every clause of `role` against the theory of its used trait.
pub fn bind(role: &RoleUnit, theory: Arc<Theory>) -> Result<BoundRole, Vec<Diagnostic>> {
    let sort = Sort::simple(role.name.clone());
    if !theory.is_object_sort(&sort) {
        return Err(vec![Diagnostic::error(
            role.span,
            format!("{} is not an object sort of trait {}", role.name, role.uses),
        )]);
    }
    let mut errors = Vec::new();
    let mut lints = Vec::new();
    let mut methods = Vec::new();
    let mut seen = BTreeSet::new();
    for m in &role.methods {
        if !seen.insert(m.name.clone()) {
            errors.push(Diagnostic::error(m.span, format!("method `{}` is specified twice", m.name)));
            continue;
        }
        match bind_method(&theory, role, &sort, m, &mut lints) {
            Ok(c) => methods.push(c),
            Err(mut e) => errors.append(&mut e),
        }
    }
    if !errors.is_empty() {
        errors.extend(lints);
        return Err(errors);
    }
    for c in &methods {
        if c.ret.is_none() && c.modifies.is_empty() && !c.constructs {
            lints.push(Diagnostic::warning(
                c.span,
                format!("`{}` returns nothing and modifies nothing", c.name),
            ));
        }
    }
    Ok(BoundRole {
        name: role.name.clone(),
        sort,
        theory,
        methods,
        lints,
    })
}

/// Method category: returns a value, changes its own object, or also its environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Category {
    #[serde(rename = "O")]
    O,
    #[serde(rename = "O-E")]
    OE,
    #[serde(rename = "V")]
    V,
    /// Neither returns a value nor changes anything.
    #[serde(rename = "none")]
    None,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::O => "O",
            Category::OE => "O-E",
            Category::V => "V",
            Category::None => "none",
        })
    }
}

fn is_self(e: &Expr) -> bool {
    matches!(&e.kind, ExprKind::Var(v) if v == "self")
}

fn mentions_self(e: &Expr) -> bool {
    e.free_vars().iter().any(|v| v == "self")
}

/// Assigns V, O or O-E; value-returning mutators and environment-only mutators are rejected.
pub fn categorize(th: &Theory, c: &MethodContract) -> Result<Category, String> {
    let mut own = c.constructs;
    let mut env = false;
    // Any frame expression mentioning `self` counts as own state, even when it also denotes others.
    for item in &c.modifies {
        let (e, direct) = match item {
            FrameItem::Object(e) => (e, is_self(e)),
            FrameItem::Slot { holder, .. } => (holder, is_self(holder)),
            FrameItem::Contained(e) => (e, false),
        };
        if direct {
            own = true;
        } else {
            env = true;
            own |= mentions_self(e);
        }
    }
    if c.constructs {
        // A constructor that links itself to an object parameter changes that object too.
        let object_params: Vec<&str> = c
            .params
            .iter()
            .filter(|(_, s)| th.is_object_sort(s))
            .map(|(n, _)| n.as_str())
            .collect();
        c.ensures.visit(&mut |e| {
            if let ExprKind::Eq(a, b) = &e.kind {
                let links = |x: &Expr, y: &Expr| {
                    matches!(&x.kind, ExprKind::Op(id, _) if matches!(th.op(*id).interp, Interp::Relation | Interp::Inverse(_)))
                        && matches!(&y.kind, ExprKind::Var(v) if object_params.contains(&v.as_str()))
                };
                if links(a, b) || links(b, a) {
                    env = true;
                }
            }
            if let ExprKind::Op(id, args) = &e.kind {
                if matches!(th.op(*id).interp, Interp::Native(Native::In)) && args.len() == 2 {
                    if let ExprKind::Op(rel, holder) = &args[1].kind {
                        if th.op(*rel).interp == Interp::Relation
                            && holder.iter().any(|h| matches!(&h.kind, ExprKind::Var(v) if object_params.contains(&v.as_str())))
                        {
                            env = true;
                        }
                    }
                }
            }
        });
    }
    let returns = c.ret.is_some();
    match (returns, own, env) {
        (true, false, false) => Ok(Category::V),
        (true, _, _) => Err(format!("`{}` returns a value and modifies state; split it into a V and an O method", c.name)),
        (false, true, false) => Ok(Category::O),
        (false, true, true) => Ok(Category::OE),
        (false, false, true) => Err(format!("`{}` modifies other objects but not its own", c.name)),
        (false, false, false) => Ok(Category::None),
    }
}

/// Bindings for `self`, the parameters and optionally `result`.
pub fn bindings(c: &MethodContract, receiver: ObjId, sort: &Sort, args: &[Value], result: Option<&Value>) -> Bindings {
    let mut b = Bindings::new();
    b.insert("self".into(), Value::Obj(receiver, sort.clone()));
    for ((n, _), v) in c.params.iter().zip(args) {
        b.insert(n.clone(), v.clone());
    }
    if let Some(r) = result {
        b.insert("result".into(), r.clone());
    }
    b
}

/// Evaluates the requires clause purely in the pre state.
pub fn eval_requires(th: &Theory, c: &MethodContract, pre: &Store, b: &Bindings, env: &BTreeMap<String, Value>) -> Result<bool, EvalError> {
    match &c.requires {
        None => Ok(true),
        Some(r) => Evaluator::new(th, env).with_world(World::single(pre)).truth(r, b),
    }
}

/// Evaluates a clause over a pre/post pair; unmarked state-dependent operators read post.
pub fn eval_clause(
    th: &Theory,
    clause: &Expr,
    pre: &Store,
    post: &Store,
    b: &Bindings,
    env: &BTreeMap<String, Value>,
) -> Result<bool, EvalError> {
    let world = World { pre, post, default: post };
    Evaluator::new(th, env).with_world(world).truth(clause, b)
}

/// The frame evaluated in the pre state.
#[derive(Clone, Debug, Default)]
pub struct Frame {
    pub objects: BTreeSet<ObjId>,
    pub slots: BTreeSet<(String, ObjId)>,
}

pub fn eval_frame(th: &Theory, c: &MethodContract, pre: &Store, b: &Bindings, env: &BTreeMap<String, Value>) -> Result<Frame, EvalError> {
    let ev = Evaluator::new(th, env).with_world(World::single(pre));
    let mut f = Frame::default();
    let obj = |v: Value| {
        v.as_obj()
            .ok_or_else(|| EvalError::Domain(format!("frame item evaluated to non-object {v}")))
    };
    for item in &c.modifies {
        ev.reset();
        match item {
            FrameItem::Object(e) => {
                f.objects.insert(obj(ev.eval(e, b)?)?);
            }
            FrameItem::Slot { rel, holder } => {
                f.slots.insert((rel.clone(), obj(ev.eval(holder, b)?)?));
            }
            FrameItem::Contained(e) => match ev.eval(e, b)? {
                Value::Set(_, s) => {
                    for v in s {
                        f.objects.insert(obj(v)?);
                    }
                }
                other => return Err(EvalError::Domain(format!("frame item evaluated to non-set {other}"))),
            },
        }
    }
    Ok(f)
}

/// Objects and relation edits that fall outside the frame.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FrameVerdict {
    pub violations: Vec<String>,
}

impl FrameVerdict {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Compares pre and post: changed values and relation edits must be covered by the frame.
///
/// Objects absent from `pre` are fresh and may be initialized freely.
pub fn check_frame(th: &Theory, c: &MethodContract, frame: &Frame, pre: &Store, post: &Store, self_id: ObjId) -> FrameVerdict {
    let env = BTreeMap::new();
    let ev = Evaluator::new(th, &env).with_world(World::single(post));
    let mut v = FrameVerdict::default();
    for (id, entry) in &pre.objects {
        let Some(after) = post.objects.get(id) else {
            v.violations.push(format!("object {} disappeared", entry.label));
            continue;
        };
        let value_sort = th.object_sorts.get(&entry.sort).cloned().unwrap_or_else(|| entry.sort.clone());
        ev.reset();
        let same = ev.equal(&value_sort, &entry.value, &after.value).unwrap_or(false);
        if !same && !frame.objects.contains(id) {
            v.violations.push(format!(
                "{} changed from {} to {} outside the modifies frame of `{}`",
                entry.label,
                pre.display_value(&entry.value),
                post.display_value(&after.value),
                c.name
            ));
        }
    }
    let fresh = |o: &ObjId| !pre.contains(*o) || (c.constructs && *o == self_id);
    let rels: BTreeSet<&String> = pre.relations.keys().chain(post.relations.keys()).collect();
    for rel in rels {
        let pairs = |s: &Store| -> BTreeSet<(ObjId, ObjId)> {
            s.relations
                .get(rel)
                .map(|m| m.iter().flat_map(|(h, ts)| ts.iter().map(move |t| (*h, *t))).collect())
                .unwrap_or_default()
        };
        let before = pairs(pre);
        let after = pairs(post);
        for (h, t) in before.symmetric_difference(&after) {
            let covered = frame.slots.contains(&(rel.clone(), *h))
                || frame.objects.contains(h)
                || frame.objects.contains(t)
                || fresh(h)
                || fresh(t);
            if !covered {
                let what = if after.contains(&(*h, *t)) { "added to" } else { "removed from" };
                v.violations.push(format!(
                    "{} {what} {rel}({}) outside the modifies frame of `{}`",
                    post.label(*t),
                    post.label(*h),
                    c.name
                ));
            }
        }
    }
    v
}

/// Reads `x'` in a clause: the object whose post value is constrained.
pub fn post_value_target<'e>(th: &Theory, e: &'e Expr) -> Option<&'e Expr> {
    match &e.kind {
        ExprKind::Op(id, args)
            if th.op(*id).interp == Interp::ObjValue
                && args.len() == 2
                && matches!(args[1].kind, ExprKind::Lit(Value::State(StateTag::Post))) =>
        {
            Some(&args[0])
        }
        _ => None,
    }
}
