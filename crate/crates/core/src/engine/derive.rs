//! Pre/post contracts of compound actions, composed from their parts.

use std::collections::BTreeMap;

use serde::Serialize;

use super::System;
use crate::kernel::expr::{Elaborator, Scope};
use crate::sort::Sort;
use crate::syntax::ast::{Action, ActionKind, LetSource, Term, TermKind, VarDecl};
use crate::syntax::render_term;

/// A derived contract, with one child per sub-action.
#[derive(Clone, Debug, Serialize)]
pub struct Derived {
    pub node: String,
    pub pre: String,
    pub post: String,
    pub children: Vec<Derived>,
    #[serde(skip)]
    pub pre_term: Term,
    #[serde(skip)]
    pub post_term: Term,
}

impl Derived {
    fn leaf(node: String, pre: Term, post: Term, children: Vec<Derived>) -> Derived {
        Derived {
            node,
            pre: render_term(&pre),
            post: render_term(&post),
            children,
            pre_term: pre,
            post_term: post,
        }
    }
}

struct Deriver<'s> {
    sys: &'s System,
    class: String,
}

fn forall(var: &str, sort: &Sort, set: &Term, body: Term) -> Term {
    if body.is_true() {
        return body;
    }
    let member = Term::app("in", vec![Term::id(var), set.clone()]);
    Term::new(
        TermKind::Forall(
            vec![VarDecl {
                name: var.to_string(),
                sort: sort.clone(),
                span: Default::default(),
            }],
            Box::new(Term::implies(member, body)),
        ),
        Default::default(),
    )
}

/// `exists v in s. body`, written without an existential quantifier.
fn exists(var: &str, sort: &Sort, set: &Term, body: Term) -> Term {
    Term::not(forall(var, sort, set, Term::not(body)))
}

fn or(a: Term, b: Term) -> Term {
    if a.is_true() || b.is_true() {
        return Term::truth();
    }
    Term::or(a, b)
}

impl Deriver<'_> {
    fn sort_of(&self, t: &Term, scope: &Scope) -> Result<Sort, String> {
        let role = self.sys.role(&self.class).ok_or_else(|| format!("no role {}", self.class))?;
        Elaborator::new(&role.theory)
            .infer(t, scope, None)
            .map(|e| e.sort)
            .map_err(|e| e.message)
    }

    fn call(&self, receiver: Option<&Term>, method: &str, args: &[Term], scope: &Scope) -> Result<(Term, Term), String> {
        let role_name = match receiver {
            None => self.class.clone(),
            Some(t) => self.sort_of(t, scope)?.to_string(),
        };
        let c = self
            .sys
            .contract(&role_name, method)
            .ok_or_else(|| format!("unbound method `{role_name}.{method}`"))?;
        let mut map = BTreeMap::new();
        if let Some(r) = receiver {
            map.insert("self".to_string(), r.clone());
        }
        for ((p, _), a) in c.params.iter().zip(args) {
            map.insert(p.clone(), a.clone());
        }
        let pre = c.requires_term.clone().unwrap_or_else(Term::truth).substitute(&map);
        let post = c.ensures_term.substitute(&map);
        Ok((pre, post))
    }

    fn derive(&self, a: &Action, scope: &mut Scope) -> Result<Derived, String> {
        match &a.kind {
            ActionKind::Invoke { receiver, method, args } => {
                let (pre, post) = self.call(receiver.as_ref(), method, args, scope)?;
                let recv = receiver.as_ref().map(|r| format!("{}.", render_term(r))).unwrap_or_default();
                Ok(Derived::leaf(format!("{recv}{method}"), pre, post, vec![]))
            }
            ActionKind::Seq(x, y) => {
                let (dx, dy) = (self.derive(x, scope)?, self.derive(y, scope)?);
                let post = Term::and(dx.post_term.clone(), dy.post_term.clone());
                Ok(Derived::leaf("seq".into(), dx.pre_term.clone(), post, vec![dx, dy]))
            }
            ActionKind::Indep(x, y) => {
                let (dx, dy) = (self.derive(x, scope)?, self.derive(y, scope)?);
                let pre = Term::and(dx.pre_term.clone(), dy.pre_term.clone());
                let post = Term::and(dx.post_term.clone(), dy.post_term.clone());
                Ok(Derived::leaf("indep".into(), pre, post, vec![dx, dy]))
            }
            ActionKind::Choice(x, y) => {
                let (dx, dy) = (self.derive(x, scope)?, self.derive(y, scope)?);
                let pre = or(dx.pre_term.clone(), dy.pre_term.clone());
                let post = or(dx.post_term.clone(), dy.post_term.clone());
                Ok(Derived::leaf("choice".into(), pre, post, vec![dx, dy]))
            }
            ActionKind::DistIndep { var, set, body } | ActionKind::DistChoice { var, set, body } => {
                let set_sort = self.sort_of(set, scope)?;
                let role = self.sys.role(&self.class).ok_or("no role")?;
                let elem = role
                    .theory
                    .element_sort(&set_sort)
                    .ok_or_else(|| format!("{set_sort} is not a set sort"))?;
                scope.push((var.clone(), elem.clone()));
                let d = self.derive(body, scope);
                scope.pop();
                let d = d?;
                let indep = matches!(a.kind, ActionKind::DistIndep { .. });
                let (pre, post, node) = if indep {
                    (
                        forall(var, &elem, set, d.pre_term.clone()),
                        forall(var, &elem, set, d.post_term.clone()),
                        "dist-indep",
                    )
                } else {
                    (
                        exists(var, &elem, set, d.pre_term.clone()),
                        exists(var, &elem, set, d.post_term.clone()),
                        "dist-choice",
                    )
                };
                Ok(Derived::leaf(node.into(), pre, post, vec![d]))
            }
            ActionKind::Let { var, sort, source, body } => {
                let (pre, post, mut children) = match source {
                    LetSource::Invoke(inv) => {
                        let d = self.derive(inv, scope)?;
                        (d.pre_term.clone(), d.post_term.clone(), vec![d])
                    }
                    LetSource::Term(t) => match &t.kind {
                        TermKind::App(m, args) if self.sys.contract(&self.class, m).is_some() => {
                            let (pre, post) = self.call(None, m, args, scope)?;
                            (pre, post, vec![])
                        }
                        _ => (
                            Term::truth(),
                            Term::app("=", vec![Term::id("result"), t.clone()]),
                            vec![],
                        ),
                    },
                };
                let post = post.substitute(&BTreeMap::from([("result".to_string(), Term::id(var.clone()))]));
                scope.push((var.clone(), sort.clone()));
                let d = self.derive(body, scope);
                scope.pop();
                let d = d?;
                let all_post = Term::and(post, d.post_term.clone());
                children.push(d);
                Ok(Derived::leaf(format!("let {var}"), pre, all_post, children))
            }
            ActionKind::If { guard, body } => {
                let d = self.derive(body, scope)?;
                let pre = Term::implies(guard.clone(), d.pre_term.clone());
                let post = Term::implies(guard.clone(), d.post_term.clone());
                Ok(Derived::leaf("if".into(), pre, post, vec![d]))
            }
            ActionKind::While { guard, body } => {
                let d = self.derive(body, scope)?;
                let pre = Term::implies(guard.clone(), d.pre_term.clone());
                let post = Term::not(guard.clone());
                Ok(Derived::leaf("while".into(), pre, post, vec![d]))
            }
        }
    }
}

/// Derives the contract of `action`, the body of a method of `class` with `params`.
pub fn derive_contract(sys: &System, class: &str, params: &[(String, Sort)], action: &Action) -> Result<Derived, String> {
    let Some(role) = sys.role(class) else {
        return Err(format!("no role {class}"));
    };
    let mut scope: Scope = vec![("self".into(), role.sort.clone())];
    scope.extend(params.iter().cloned());
    Deriver {
        sys,
        class: class.to_string(),
    }
    .derive(action, &mut scope)
}
