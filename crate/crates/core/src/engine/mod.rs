//! Tier 3: binding interaction bodies against roles and executing them over a store.

mod checks;
mod derive;
mod exec;
mod layering;
mod leaf;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use crate::diag::{Diagnostic, Span};
use crate::kernel::expr::{Elaborator, Expr, Scope};
use crate::kernel::theory::{flatten, Theory};
use crate::project::Project;
use crate::roles::{bind, BoundRole, MethodContract};
use crate::sort::Sort;
use crate::syntax::ast::{Action, ActionKind, LetSource, Term, TermKind};
use crate::syntax::render_term;

pub use checks::{check_independence, check_redundancy, random_store, IndependenceResult, RedundancyResult};
pub use derive::{derive_contract, Derived};
pub use exec::{Engine, Event, Policy, Violation, ViolationKind};
pub use layering::check_layering;
pub use leaf::{leaf_steps, LeafStep};

/// A bound invocation `receiver.method(args)`.
#[derive(Clone, Debug)]
pub struct Call {
    /// `None` is the enclosing object.
    pub receiver: Option<Expr>,
    /// Role (and object sort) of the receiver.
    pub role: String,
    pub method: String,
    pub args: Vec<Expr>,
}

#[derive(Clone, Debug)]
pub enum LetSrc {
    Call(Call),
    Term(Expr),
}

/// An action tree with sort-checked terms.
#[derive(Clone, Debug)]
pub enum Act {
    Invoke(Call),
    Seq(Box<Act>, Box<Act>),
    Indep(Box<Act>, Box<Act>),
    Choice(Box<Act>, Box<Act>),
    Dist {
        choice: bool,
        var: String,
        sort: Sort,
        set: Expr,
        body: Box<Act>,
    },
    Let {
        var: String,
        source: LetSrc,
        body: Box<Act>,
    },
    If {
        guard: Expr,
        text: String,
        body: Box<Act>,
    },
    While {
        guard: Expr,
        text: String,
        body: Box<Act>,
    },
}

impl Act {
    pub fn has_indep(&self) -> bool {
        match self {
            Act::Indep(..) | Act::Dist { choice: false, .. } => true,
            Act::Invoke(_) => false,
            Act::Seq(a, b) | Act::Choice(a, b) => a.has_indep() || b.has_indep(),
            Act::Dist { body, .. } | Act::Let { body, .. } | Act::If { body, .. } | Act::While { body, .. } => {
                body.has_indep()
            }
        }
    }

    /// Every call in the tree, in source order.
    pub fn calls(&self) -> Vec<&Call> {
        let mut out = Vec::new();
        self.collect_calls(&mut out);
        out
    }

    fn collect_calls<'a>(&'a self, out: &mut Vec<&'a Call>) {
        match self {
            Act::Invoke(c) => out.push(c),
            Act::Seq(a, b) | Act::Indep(a, b) | Act::Choice(a, b) => {
                a.collect_calls(out);
                b.collect_calls(out);
            }
            Act::Let { source, body, .. } => {
                if let LetSrc::Call(c) = source {
                    out.push(c);
                }
                body.collect_calls(out);
            }
            Act::Dist { body, .. } | Act::If { body, .. } | Act::While { body, .. } => body.collect_calls(out),
        }
    }
}

/// An interaction method body of a class.
#[derive(Clone, Debug)]
pub struct BodyDef {
    pub class: String,
    pub name: String,
    pub params: Vec<(String, Sort)>,
    pub body: Act,
    pub source: Action,
    pub span: Span,
}

/// All roles and interaction bodies of a project, bound and ready to execute.
#[derive(Clone, Debug, Default)]
pub struct System {
    pub roles: BTreeMap<String, BoundRole>,
    /// Bodies by class, in declaration order.
    pub bodies: BTreeMap<String, Vec<BodyDef>>,
    pub theories: BTreeMap<String, Arc<Theory>>,
    /// Warnings gathered while binding.
    pub lints: Vec<Diagnostic>,
    /// Roles whose specification failed to bind; references to them are not reported again.
    pub failed: BTreeSet<String>,
}

impl System {
    pub fn role(&self, name: &str) -> Option<&BoundRole> {
        self.roles.get(name)
    }

    pub fn contract(&self, role: &str, method: &str) -> Option<&MethodContract> {
        self.roles.get(role)?.method(method)
    }

    pub fn body(&self, class: &str, method: &str) -> Option<&BodyDef> {
        self.bodies.get(class)?.iter().find(|b| b.name == method)
    }

    pub fn all_bodies(&self) -> impl Iterator<Item = &BodyDef> {
        self.bodies.values().flatten()
    }

    /// Flattens and binds every unit; returns the (possibly partial) system and errors.
    pub fn bind(project: &Project) -> (System, Vec<Diagnostic>) {
        let mut sys = System::default();
        let mut errors = Vec::new();
        let traits = project.traits();
        let theory = |name: &str, errors: &mut Vec<Diagnostic>, sys: &mut System| -> Option<Arc<Theory>> {
            if let Some(t) = sys.theories.get(name) {
                return Some(t.clone());
            }
            match flatten(name, &traits) {
                Ok(th) => {
                    let th = Arc::new(th);
                    sys.theories.insert(name.to_string(), th.clone());
                    Some(th)
                }
                Err(e) => {
                    let mut d = e.to_diagnostic();
                    if let Some(p) = e.within().and_then(|w| project.path_of(crate::syntax::ast::UnitKind::Trait, w)) {
                        d = d.in_file(p);
                    }
                    errors.push(d);
                    None
                }
            }
        };
        for (t, path) in project.user_traits() {
            if let Some(th) = theory(&t.name, &mut errors, &mut sys) {
                sys.lints.extend(th.lints.iter().cloned().map(|d| d.in_file(path)));
            }
        }
        for (role, path) in project.roles() {
            if !traits.contains_key(&role.uses) {
                errors.push(
                    Diagnostic::error(role.uses_span, format!("role {} uses unknown trait {}", role.name, role.uses))
                        .in_file(path),
                );
                continue;
            }
            let Some(th) = theory(&role.uses, &mut errors, &mut sys) else { continue };
            match bind(role, th) {
                Ok(b) => {
                    sys.lints.extend(b.lints.iter().cloned().map(|d| d.in_file(path)));
                    sys.roles.insert(role.name.clone(), b);
                }
                Err(ds) => {
                    sys.failed.insert(role.name.clone());
                    errors.extend(ds.into_iter().map(|d| d.in_file(path)));
                }
            }
        }
        let mut broken = BTreeSet::new();
        for (unit, path) in project.interactions() {
            for class in &unit.classes {
                let Some(role) = sys.roles.get(&class.name) else {
                    if project.path_of(crate::syntax::ast::UnitKind::Role, &class.name).is_none() {
                        errors.push(
                            Diagnostic::error(class.span, format!("class {} has no role specification", class.name))
                                .in_file(path),
                        );
                    }
                    continue;
                };
                let mut defs = Vec::new();
                for m in &class.methods {
                    match bind_body(&sys, role, m) {
                        Ok(def) => defs.push(def),
                        Err(ds) => {
                            broken.insert((class.name.clone(), m.name.clone()));
                            errors.extend(ds.into_iter().map(|d| d.in_file(path)));
                        }
                    }
                }
                sys.bodies.entry(class.name.clone()).or_default().extend(defs);
            }
        }
        // Methods without a body run from their ensures clause.
        for (name, role) in &sys.roles {
            for c in &role.methods {
                if sys.body(name, &c.name).is_none() && !broken.contains(&(name.clone(), c.name.clone())) {
                    if let Err(msg) = leaf_steps(&role.theory, &c.ensures) {
                        let path = project.path_of(crate::syntax::ast::UnitKind::Role, name);
                        let mut d = Diagnostic::error(
                            c.span,
                            format!("`{name}.{}` has no interaction body and its ensures cannot be executed: {msg}", c.name),
                        );
                        if let Some(p) = path {
                            d = d.in_file(p);
                        }
                        errors.push(d);
                    }
                }
            }
        }
        (sys, errors)
    }
}

struct Binder<'s> {
    sys: &'s System,
    el: Elaborator<'s>,
    class: &'s BoundRole,
}

fn err(span: Span, msg: impl Into<String>) -> Vec<Diagnostic> {
    vec![Diagnostic::error(span, msg)]
}

fn bind_body(sys: &System, role: &BoundRole, m: &crate::syntax::ast::MethodDef) -> Result<BodyDef, Vec<Diagnostic>> {
    let Some(contract) = role.method(&m.name) else {
        return Err(err(
            m.span,
            format!("method `{}` of class {} has no contract in role {}", m.name, role.name, role.name),
        ));
    };
    if contract.ret.is_some() {
        return Err(err(
            m.span,
            format!("`{}` returns a value; interaction bodies cannot return values", m.name),
        ));
    }
    let mut params = Vec::new();
    for p in &m.params {
        match &p.sort {
            Some(s) => params.push((p.name.clone(), s.clone())),
            None => return Err(err(p.span, format!("parameter `{}` of `{}` needs a sort", p.name, m.name))),
        }
    }
    if params != contract.params {
        let show = |ps: &[(String, Sort)]| ps.iter().map(|(n, s)| format!("{n}: {s}")).collect::<Vec<_>>().join(", ");
        return Err(err(
            m.span,
            format!(
                "parameters ({}) of `{}` differ from its contract ({})",
                show(&params),
                m.name,
                show(&contract.params)
            ),
        ));
    }
    let mut scope: Scope = vec![("self".into(), role.sort.clone())];
    scope.extend(params.iter().cloned());
    let mut b = Binder {
        sys,
        el: Elaborator::new(&role.theory),
        class: role,
    };
    let body = b.action(&m.body, &mut scope)?;
    Ok(BodyDef {
        class: role.name.clone(),
        name: m.name.clone(),
        params,
        body,
        source: m.body.clone(),
        span: m.span,
    })
}

impl Binder<'_> {
    fn term(&mut self, t: &Term, scope: &Scope, sort: Option<&Sort>) -> Result<Expr, Vec<Diagnostic>> {
        let r = match sort {
            Some(s) => self.el.check(t, scope, s),
            None => self.el.infer(t, scope, None),
        };
        r.map_err(|e| vec![e.to_diagnostic()])
    }

    fn call(&mut self, receiver: Option<&Term>, method: &str, args: &[Term], span: Span, scope: &Scope) -> Result<Call, Vec<Diagnostic>> {
        let (recv, sort) = match receiver {
            None => (None, self.class.sort.clone()),
            Some(t) => {
                let e = self.term(t, scope, None)?;
                let s = e.sort.clone();
                (Some(e), s)
            }
        };
        let Some(role) = self.sys.roles.get(&sort.to_string()) else {
            if self.sys.failed.contains(&sort.to_string()) {
                return Err(vec![]);
            }
            return Err(err(span, format!("receiver of `{method}` has sort {sort}, which has no role specification")));
        };
        let Some(c) = role.method(method) else {
            return Err(err(span, format!("role {} has no method `{method}`", role.name)));
        };
        if c.constructs {
            return Err(err(span, format!("constructor `{method}` cannot be invoked on an existing object")));
        }
        if c.params.len() != args.len() {
            return Err(err(
                span,
                format!("`{}.{method}` expects {} argument(s), got {}", role.name, c.params.len(), args.len()),
            ));
        }
        let mut out = Vec::new();
        for (a, (_, s)) in args.iter().zip(&c.params) {
            out.push(self.term(a, scope, Some(s))?);
        }
        Ok(Call {
            receiver: recv,
            role: role.name.clone(),
            method: method.to_string(),
            args: out,
        })
    }

    fn action(&mut self, a: &Action, scope: &mut Scope) -> Result<Act, Vec<Diagnostic>> {
        Ok(match &a.kind {
            ActionKind::Invoke { receiver, method, args } => {
                Act::Invoke(self.call(receiver.as_ref(), method, args, a.span, scope)?)
            }
            ActionKind::Seq(x, y) => Act::Seq(Box::new(self.action(x, scope)?), Box::new(self.action(y, scope)?)),
            ActionKind::Indep(x, y) => Act::Indep(Box::new(self.action(x, scope)?), Box::new(self.action(y, scope)?)),
            ActionKind::Choice(x, y) => Act::Choice(Box::new(self.action(x, scope)?), Box::new(self.action(y, scope)?)),
            ActionKind::DistIndep { var, set, body } | ActionKind::DistChoice { var, set, body } => {
                let set_e = self.term(set, scope, None)?;
                let Some(elem) = self.class.theory.element_sort(&set_e.sort) else {
                    return Err(err(set.span, format!("`{}` has sort {}, not a set", render_term(set), set_e.sort)));
                };
                scope.push((var.clone(), elem.clone()));
                let body = self.action(body, scope);
                scope.pop();
                Act::Dist {
                    choice: matches!(a.kind, ActionKind::DistChoice { .. }),
                    var: var.clone(),
                    sort: elem,
                    set: set_e,
                    body: Box::new(body?),
                }
            }
            ActionKind::Let { var, sort, source, body } => {
                let source = match source {
                    LetSource::Invoke(inv) => match &inv.kind {
                        ActionKind::Invoke { receiver, method, args } => {
                            LetSrc::Call(self.call(receiver.as_ref(), method, args, inv.span, scope)?)
                        }
                        _ => return Err(err(inv.span, "a let binds the value of a single invocation")),
                    },
                    LetSource::Term(t) => match self.self_call(t) {
                        Some((m, args)) => LetSrc::Call(self.call(None, &m, &args, t.span, scope)?),
                        None => LetSrc::Term(self.term(t, scope, Some(sort))?),
                    },
                };
                if let LetSrc::Call(c) = &source {
                    let ret = self.sys.contract(&c.role, &c.method).and_then(|m| m.ret.clone());
                    match ret {
                        Some(r) if &r == sort => {}
                        Some(r) => {
                            return Err(err(a.span, format!("`{}` returns {r}, but `{var}` is declared {sort}", c.method)))
                        }
                        None => {
                            return Err(err(
                                a.span,
                                format!("`{}` returns no value; a let binds only value-returning methods", c.method),
                            ))
                        }
                    }
                }
                scope.push((var.clone(), sort.clone()));
                let body = self.action(body, scope);
                scope.pop();
                Act::Let {
                    var: var.clone(),
                    source,
                    body: Box::new(body?),
                }
            }
            ActionKind::If { guard, body } | ActionKind::While { guard, body } => {
                let g = self.term(guard, scope, Some(&Sort::bool()))?;
                let text = render_term(guard);
                let body = Box::new(self.action(body, scope)?);
                if matches!(a.kind, ActionKind::If { .. }) {
                    Act::If { guard: g, text, body }
                } else {
                    Act::While { guard: g, text, body }
                }
            }
        })
    }

    /// A let source written as a bare method call on the enclosing object.
    fn self_call(&self, t: &Term) -> Option<(String, Vec<Term>)> {
        let (name, args) = match &t.kind {
            TermKind::App(n, a) => (n.clone(), a.clone()),
            TermKind::Id(n) => (n.clone(), vec![]),
            _ => return None,
        };
        if self.class.method(&name).is_some() && self.class.theory.ops_named(&name).next().is_none() {
            Some((name, args))
        } else {
            None
        }
    }
}

/// The file a diagnostic about `role` belongs to, if known.
pub fn role_path<'p>(project: &'p Project, role: &str) -> Option<&'p Path> {
    project.path_of(crate::syntax::ast::UnitKind::Role, role)
}
