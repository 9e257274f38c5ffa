//! Atomic execution of actions with contract checking and a structured trace.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::leaf::{leaf_steps, LeafStep};
use super::{Act, Call, LetSrc, System};
use crate::kernel::eval::{Bindings, EvalError, Evaluator, World};
use crate::kernel::expr::Expr;
use crate::kernel::theory::Theory;
use crate::kernel::value::Value;
use crate::roles::{bindings, check_frame, eval_clause, eval_frame, eval_requires, BoundRole};
use crate::sort::ObjId;
use crate::store::Store;

/// Knobs for one simulation run.
#[derive(Clone, Debug)]
pub struct Policy {
    pub seed: u64,
    /// Extra random orders tried for every independent composition.
    pub perm_samples: usize,
    pub while_cap: usize,
    /// When false only effects are computed; contracts and frames are not checked.
    pub check_contracts: bool,
}

impl Default for Policy {
    fn default() -> Policy {
        Policy {
            seed: 42,
            perm_samples: 5,
            while_cap: 10_000,
            check_contracts: true,
        }
    }
}

/// One line of the trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Event {
    pub kind: &'static str,
    pub depth: usize,
    pub receiver: Option<String>,
    pub method: Option<String>,
    pub args: Option<Vec<String>>,
    pub verdicts: Option<BTreeMap<String, String>>,
    pub result: Option<String>,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Event {
    pub fn new(kind: &'static str, depth: usize) -> Event {
        Event {
            kind,
            depth,
            receiver: None,
            method: None,
            args: None,
            verdicts: None,
            result: None,
            seed: None,
            detail: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// The caller invoked a method outside its precondition.
    Requires,
    /// The post state does not satisfy the ensures clause.
    Ensures,
    Frame,
    /// A store invariant such as at most one holder per object.
    Invariant,
    /// An ensures clause step could not be carried out.
    Leaf,
    NoChoice,
    WhileCap,
    /// Independent components gave different stores in different orders.
    Divergence,
    /// A term could not be evaluated.
    Eval,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("kind serializes");
        f.write_str(s.as_str().unwrap_or("violation"))
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize)]
#[error("{kind} violation: {message}")]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
    /// Set once a violation event has been traced.
    #[serde(skip)]
    pub reported: bool,
}

impl Violation {
    pub fn new(kind: ViolationKind, message: impl Into<String>) -> Violation {
        Violation {
            kind,
            message: message.into(),
            reported: false,
        }
    }

    /// True for failures attributed to the caller rather than the specification.
    pub fn is_caller_error(&self) -> bool {
        self.kind == ViolationKind::Requires
    }
}

/// Executes actions over a store, one top-level invocation at a time.
pub struct Engine<'s> {
    pub sys: &'s System,
    pub policy: Policy,
    pub env: BTreeMap<String, Value>,
    trace: Vec<Event>,
    tracing: bool,
    /// Inside a permutation replay: no nested sampling.
    sampling: bool,
    depth: usize,
    rng: ChaCha8Rng,
}

fn eval_err(what: &str, e: EvalError) -> Violation {
    Violation::new(ViolationKind::Eval, format!("{what}: {e}"))
}

impl<'s> Engine<'s> {
    pub fn new(sys: &'s System, policy: Policy, env: BTreeMap<String, Value>) -> Engine<'s> {
        let rng = ChaCha8Rng::seed_from_u64(policy.seed);
        Engine {
            sys,
            policy,
            env,
            trace: Vec::new(),
            tracing: true,
            sampling: false,
            depth: 0,
            rng,
        }
    }

    /// Disables trace recording.
    pub fn quiet(mut self) -> Engine<'s> {
        self.tracing = false;
        self
    }

    pub fn trace(&self) -> &[Event] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.trace)
    }

    pub fn emit(&mut self, e: Event) {
        if self.tracing {
            self.trace.push(e);
        }
    }

    fn role(&self, name: &str) -> Result<&'s BoundRole, Violation> {
        self.sys
            .role(name)
            .ok_or_else(|| Violation::new(ViolationKind::Eval, format!("no role {name}")))
    }

    /// Invokes `method` on an existing object.
    pub fn call(&mut self, store: &mut Store, receiver: ObjId, method: &str, args: Vec<Value>) -> Result<Option<Value>, Violation> {
        let Some(sort) = store.sort(receiver).cloned() else {
            return Err(Violation::new(ViolationKind::Eval, format!("no object {receiver}")));
        };
        self.invoke(store, receiver, &sort.to_string(), method, args, None)
    }

    /// Creates an object of role `class` with `value` and runs its constructor.
    pub fn construct(
        &mut self,
        store: &mut Store,
        class: &str,
        label: &str,
        value: Value,
        args: Vec<Value>,
    ) -> Result<ObjId, Violation> {
        let role = self.role(class)?;
        let Some(ctor) = role.methods.iter().find(|m| m.constructs) else {
            return Err(Violation::new(ViolationKind::Eval, format!("role {class} has no constructor")));
        };
        let name = ctor.name.clone();
        self.invoke(store, ObjId(0), class, &name, args, Some((label, value)))?;
        store
            .find_label(label)
            .ok_or_else(|| Violation::new(ViolationKind::Eval, format!("constructor of {class} did not create {label}")))
    }

    fn begin_event(&self, store: &Store, id: ObjId, method: &str, args: &[Value]) -> Event {
        let mut e = Event::new("begin", self.depth);
        e.receiver = Some(store.label(id));
        e.method = Some(method.to_string());
        e.args = Some(args.iter().map(|a| store.display_value(a)).collect());
        e
    }

    fn invoke(
        &mut self,
        store: &mut Store,
        receiver: ObjId,
        class: &str,
        method: &str,
        args: Vec<Value>,
        fresh: Option<(&str, Value)>,
    ) -> Result<Option<Value>, Violation> {
        let pre = store.clone();
        let role = self.role(class)?;
        let Some(contract) = role.method(method) else {
            return Err(Violation::new(ViolationKind::Eval, format!("role {class} has no method `{method}`")));
        };
        let id = match fresh {
            Some((label, value)) => store.alloc(role.sort.clone(), label, value),
            None => receiver,
        };
        self.emit(self.begin_event(store, id, method, &args));
        self.depth += 1;
        let outcome = self.invoke_inner(store, &pre, role, contract, id, &args);
        self.depth -= 1;
        let mut end = self.begin_event(store, id, method, &args);
        end.kind = "end";
        match outcome {
            Ok((result, verdicts)) => {
                end.result = result.as_ref().map(|v| store.display_value(v));
                end.verdicts = Some(verdicts);
                self.emit(end);
                Ok(result)
            }
            Err(mut v) => {
                *store = pre;
                if !v.reported {
                    v.reported = true;
                    let mut e = Event::new("violation", self.depth + 1);
                    e.receiver = end.receiver.clone();
                    e.method = end.method.clone();
                    e.verdicts = Some(BTreeMap::from([("kind".to_string(), v.kind.to_string())]));
                    e.detail = Some(v.message.clone());
                    self.emit(e);
                }
                end.verdicts = Some(BTreeMap::from([("status".to_string(), "aborted".to_string())]));
                self.emit(end);
                Err(v)
            }
        }
    }

    fn invoke_inner(
        &mut self,
        store: &mut Store,
        pre: &Store,
        role: &'s BoundRole,
        contract: &'s crate::roles::MethodContract,
        id: ObjId,
        args: &[Value],
    ) -> Result<(Option<Value>, BTreeMap<String, String>), Violation> {
        let th: &Theory = &role.theory;
        let what = format!("{}.{}", store.label(id), contract.name);
        let b = bindings(contract, id, &role.sort, args, None);
        let mut verdicts = BTreeMap::new();
        let check = self.policy.check_contracts;
        if check {
            match eval_requires(th, contract, pre, &b, &self.env) {
                Ok(true) => {
                    verdicts.insert("requires".to_string(), "ok".to_string());
                }
                Ok(false) => {
                    return Err(Violation::new(
                        ViolationKind::Requires,
                        format!("requires `{}` of {what} does not hold", contract.requires_text()),
                    ))
                }
                Err(e) => return Err(eval_err(&format!("requires of {what}"), e)),
            }
        }
        let result = match self.sys.body(&role.name, &contract.name) {
            Some(def) => {
                let mut bb = b.clone();
                self.exec(&def.body, &role.name, store, &mut bb)?;
                None
            }
            None => self.leaf(th, contract, pre, store, &b)?,
        };
        if check {
            let mut bpost = b.clone();
            if let Some(r) = &result {
                bpost.insert("result".into(), r.clone());
            }
            match eval_clause(th, &contract.ensures, pre, store, &bpost, &self.env) {
                Ok(true) => {
                    verdicts.insert("ensures".to_string(), "ok".to_string());
                }
                Ok(false) => {
                    return Err(Violation::new(
                        ViolationKind::Ensures,
                        format!("ensures `{}` of {what} does not hold", contract.ensures_text()),
                    ))
                }
                Err(e) => return Err(eval_err(&format!("ensures of {what}"), e)),
            }
            let frame = eval_frame(th, contract, pre, &b, &self.env).map_err(|e| eval_err(&format!("modifies of {what}"), e))?;
            let fv = check_frame(th, contract, &frame, pre, store, id);
            if !fv.ok() {
                return Err(Violation::new(ViolationKind::Frame, fv.violations.join("; ")));
            }
            verdicts.insert("frame".to_string(), "ok".to_string());
        }
        let shared = store.shared_targets();
        if let Some((rel, t, holders)) = shared.first() {
            let hs: Vec<String> = holders.iter().map(|h| store.label(*h)).collect();
            return Err(Violation::new(
                ViolationKind::Invariant,
                format!("{} is in {rel} of more than one object ({}) after {what}", store.label(*t), hs.join(", ")),
            ));
        }
        Ok((result, verdicts))
    }

    fn leaf(
        &mut self,
        th: &Theory,
        c: &crate::roles::MethodContract,
        pre: &Store,
        store: &mut Store,
        b: &Bindings,
    ) -> Result<Option<Value>, Violation> {
        let steps = leaf_steps(th, &c.ensures).map_err(|m| Violation::new(ViolationKind::Leaf, m))?;
        let mut results = Vec::new();
        self.apply_steps(th, &steps, pre, store, b, &mut results)?;
        match results.first() {
            None => Ok(None),
            Some(e) => {
                let world = World {
                    pre,
                    post: store,
                    default: store,
                };
                Evaluator::new(th, &self.env)
                    .with_world(world)
                    .eval(e, b)
                    .map(Some)
                    .map_err(|e| eval_err(&format!("result of `{}`", c.name), e))
            }
        }
    }

    fn apply_steps<'e>(
        &self,
        th: &Theory,
        steps: &[LeafStep<'e>],
        pre: &Store,
        store: &mut Store,
        b: &Bindings,
        results: &mut Vec<&'e Expr>,
    ) -> Result<(), Violation> {
        let ev = Evaluator::new(th, &self.env).with_world(World::single(pre));
        let obj = |e: &Expr| -> Result<ObjId, Violation> {
            ev.reset();
            let v = ev.eval(e, b).map_err(|err| eval_err(&e.show(th), err))?;
            v.as_obj()
                .ok_or_else(|| Violation::new(ViolationKind::Leaf, format!("`{}` is not an object", e.show(th))))
        };
        for s in steps {
            match s {
                LeafStep::SetValue { object, value } => {
                    let o = obj(object)?;
                    ev.reset();
                    let v = ev.eval(value, b).map_err(|e| eval_err(&value.show(th), e))?;
                    store.set_value(o, v);
                }
                LeafStep::Result(e) => results.push(e),
                LeafStep::Link { rel, holder, target, add } => {
                    let (h, t) = (obj(holder)?, obj(target)?);
                    if *add {
                        store.relate(rel, h, t);
                    } else {
                        store.unrelate(rel, h, t);
                    }
                }
                LeafStep::Attach { rel, target, holder } => {
                    let (h, t) = (obj(holder)?, obj(target)?);
                    let current = store.holders(rel, t);
                    if current.iter().any(|c| *c != h) {
                        let old: Vec<String> = current.iter().map(|c| store.label(*c)).collect();
                        return Err(Violation::new(
                            ViolationKind::Leaf,
                            format!(
                                "{} already belongs to {}; reattaching it to {} is not supported",
                                store.label(t),
                                old.join(", "),
                                store.label(h)
                            ),
                        ));
                    }
                    store.relate(rel, h, t);
                }
                LeafStep::ForEach { var, set, steps } => {
                    ev.reset();
                    let members = match ev.eval(set, b).map_err(|e| eval_err(&set.show(th), e))? {
                        Value::Set(_, s) => s,
                        other => return Err(Violation::new(ViolationKind::Leaf, format!("{other} is not a set"))),
                    };
                    for m in members {
                        let mut inner = b.clone();
                        inner.insert(var.clone(), m);
                        self.apply_steps(th, steps, pre, store, &inner, results)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn theory(&self, class: &str) -> Result<&'s Theory, Violation> {
        Ok(&self.role(class)?.theory)
    }

    fn value(&self, class: &str, e: &Expr, store: &Store, b: &Bindings) -> Result<Value, Violation> {
        let th = self.theory(class)?;
        Evaluator::new(th, &self.env)
            .with_world(World::single(store))
            .eval(e, b)
            .map_err(|err| eval_err(&format!("`{}`", e.show(th)), err))
    }

    fn truth(&self, class: &str, e: &Expr, store: &Store, b: &Bindings) -> Result<bool, Violation> {
        match self.value(class, e, store, b)? {
            Value::Bool(x) => Ok(x),
            other => Err(Violation::new(ViolationKind::Eval, format!("guard evaluated to {other}"))),
        }
    }

    fn members(&self, class: &str, set: &Expr, store: &Store, b: &Bindings) -> Result<Vec<Value>, Violation> {
        match self.value(class, set, store, b)? {
            Value::Set(_, s) => Ok(s.into_iter().collect()),
            other => Err(Violation::new(ViolationKind::Eval, format!("{other} is not a set"))),
        }
    }

    fn resolve(&self, class: &str, call: &Call, store: &Store, b: &Bindings) -> Result<(ObjId, Vec<Value>), Violation> {
        let recv = match &call.receiver {
            None => b.get("self").cloned(),
            Some(e) => Some(self.value(class, e, store, b)?),
        };
        let Some(Value::Obj(id, _)) = recv else {
            return Err(Violation::new(ViolationKind::Eval, format!("receiver of `{}` is not an object", call.method)));
        };
        let args = call
            .args
            .iter()
            .map(|a| self.value(class, a, store, b))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((id, args))
    }

    fn run_call(&mut self, class: &str, call: &Call, store: &mut Store, b: &Bindings) -> Result<Option<Value>, Violation> {
        let (id, args) = self.resolve(class, call, store, b)?;
        self.invoke(store, id, &call.role, &call.method, args, None)
    }

    /// Whether the derived precondition of `act` holds in `store`.
    fn enabled(&self, class: &str, act: &Act, store: &Store, b: &Bindings) -> Result<bool, Violation> {
        Ok(match act {
            Act::Invoke(call) | Act::Let { source: LetSrc::Call(call), .. } => {
                let (id, args) = self.resolve(class, call, store, b)?;
                let role = self.role(&call.role)?;
                let c = role.method(&call.method).expect("bound call");
                let bb = bindings(c, id, &role.sort, &args, None);
                eval_requires(&role.theory, c, store, &bb, &self.env).map_err(|e| eval_err("requires", e))?
            }
            Act::Let { .. } => true,
            Act::Seq(a, _) => self.enabled(class, a, store, b)?,
            Act::Indep(x, y) => self.enabled(class, x, store, b)? && self.enabled(class, y, store, b)?,
            Act::Choice(x, y) => self.enabled(class, x, store, b)? || self.enabled(class, y, store, b)?,
            Act::Dist { choice, var, set, body, .. } => {
                let ms = self.members(class, set, store, b)?;
                let mut any = false;
                let mut all = true;
                for m in ms {
                    let mut bb = b.clone();
                    bb.insert(var.clone(), m);
                    let e = self.enabled(class, body, store, &bb)?;
                    any |= e;
                    all &= e;
                }
                if *choice {
                    any
                } else {
                    all
                }
            }
            Act::If { guard, body, .. } | Act::While { guard, body, .. } => {
                !self.truth(class, guard, store, b)? || self.enabled(class, body, store, b)?
            }
        })
    }

    /// Executes `act` in the context of `class`; `b` binds `self`, parameters and let variables.
    pub fn exec(&mut self, act: &Act, class: &str, store: &mut Store, b: &mut Bindings) -> Result<(), Violation> {
        match act {
            Act::Invoke(call) => {
                self.run_call(class, call, store, b)?;
            }
            Act::Seq(x, y) => {
                self.exec(x, class, store, b)?;
                self.exec(y, class, store, b)?;
            }
            Act::Indep(x, y) => {
                let branches = vec![(x.as_ref(), b.clone()), (y.as_ref(), b.clone())];
                self.indep(class, store, branches, vec!["left".into(), "right".into()])?;
            }
            Act::Dist {
                choice: false,
                var,
                set,
                body,
                ..
            } => {
                let ms = self.members(class, set, store, b)?;
                let labels = ms.iter().map(|m| store.display_value(m)).collect();
                let branches = ms
                    .into_iter()
                    .map(|m| {
                        let mut bb = b.clone();
                        bb.insert(var.clone(), m);
                        (body.as_ref(), bb)
                    })
                    .collect();
                self.indep(class, store, branches, labels)?;
            }
            Act::Choice(x, y) => {
                let branches = vec![(x.as_ref(), b.clone()), (y.as_ref(), b.clone())];
                self.choose(class, store, branches, vec!["left".into(), "right".into()])?;
            }
            Act::Dist {
                choice: true,
                var,
                set,
                body,
                ..
            } => {
                let ms = self.members(class, set, store, b)?;
                let labels = ms.iter().map(|m| store.display_value(m)).collect();
                let branches = ms
                    .into_iter()
                    .map(|m| {
                        let mut bb = b.clone();
                        bb.insert(var.clone(), m);
                        (body.as_ref(), bb)
                    })
                    .collect();
                self.choose(class, store, branches, labels)?;
            }
            Act::Let { var, source, body } => {
                let v = match source {
                    LetSrc::Call(call) => self.run_call(class, call, store, b)?.ok_or_else(|| {
                        Violation::new(ViolationKind::Eval, format!("`{}` returned no value", call.method))
                    })?,
                    LetSrc::Term(e) => self.value(class, e, store, b)?,
                };
                let saved = b.insert(var.clone(), v);
                let r = self.exec(body, class, store, b);
                match saved {
                    Some(old) => b.insert(var.clone(), old),
                    None => b.remove(var),
                };
                r?;
            }
            Act::If { guard, text, body } => {
                let g = self.truth(class, guard, store, b)?;
                self.guard_event(text, g);
                if g {
                    self.exec(body, class, store, b)?;
                }
            }
            Act::While { guard, text, body } => {
                let mut n = 0usize;
                loop {
                    let g = self.truth(class, guard, store, b)?;
                    self.guard_event(text, g);
                    if !g {
                        break;
                    }
                    n += 1;
                    if n > self.policy.while_cap {
                        return Err(Violation::new(
                            ViolationKind::WhileCap,
                            format!("`while {text}` exceeded {} iterations", self.policy.while_cap),
                        ));
                    }
                    self.exec(body, class, store, b)?;
                }
            }
        }
        Ok(())
    }

    fn guard_event(&mut self, text: &str, value: bool) {
        let mut e = Event::new("guard", self.depth);
        e.detail = Some(text.to_string());
        e.result = Some(value.to_string());
        self.emit(e);
    }

    fn choose(&mut self, class: &str, store: &mut Store, branches: Vec<(&Act, Bindings)>, labels: Vec<String>) -> Result<(), Violation> {
        let mut enabled = Vec::new();
        for (i, (a, bb)) in branches.iter().enumerate() {
            if self.enabled(class, a, store, bb)? {
                enabled.push(i);
            }
        }
        if enabled.is_empty() {
            return Err(Violation::new(
                ViolationKind::NoChoice,
                format!("no branch of the choice is enabled (among {})", branches.len()),
            ));
        }
        let seed: u64 = self.rng.random();
        let pick = enabled[(seed % enabled.len() as u64) as usize];
        let mut e = Event::new("choice", self.depth);
        e.seed = Some(seed);
        e.result = Some(labels.get(pick).cloned().unwrap_or_default());
        e.detail = Some(format!(
            "enabled: {}",
            enabled.iter().map(|i| labels[*i].clone()).collect::<Vec<_>>().join(", ")
        ));
        self.emit(e);
        let (a, mut bb) = branches.into_iter().nth(pick).expect("picked branch exists");
        self.exec(a, class, store, &mut bb)
    }

    fn indep(&mut self, class: &str, store: &mut Store, branches: Vec<(&Act, Bindings)>, labels: Vec<String>) -> Result<(), Violation> {
        let start = store.clone();
        for (a, bb) in &branches {
            let mut bb = bb.clone();
            self.exec(a, class, store, &mut bb)?;
        }
        if self.sampling || branches.len() < 2 {
            return Ok(());
        }
        for _ in 0..self.policy.perm_samples {
            let seed: u64 = self.rng.random();
            let mut order: Vec<usize> = (0..branches.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shown: Vec<String> = order.iter().map(|i| labels[*i].clone()).collect();
            let mut e = Event::new("permutation", self.depth);
            e.seed = Some(seed);
            e.detail = Some(format!("order: {}", shown.join(", ")));
            let mut sub = Engine {
                sys: self.sys,
                policy: self.policy.clone(),
                env: self.env.clone(),
                trace: Vec::new(),
                tracing: false,
                sampling: true,
                depth: self.depth,
                rng: ChaCha8Rng::seed_from_u64(seed),
            };
            let mut alt = start.clone();
            let mut outcome = Ok(());
            for i in &order {
                let (a, bb) = &branches[*i];
                let mut bb = bb.clone();
                outcome = sub.exec(a, class, &mut alt, &mut bb);
                if outcome.is_err() {
                    break;
                }
            }
            let diverged = match &outcome {
                Err(v) => Some(format!("order {} fails: {v}", shown.join(", "))),
                Ok(()) if alt != *store => Some(format!(
                    "order {} gives a different store: {}",
                    shown.join(", "),
                    store.diff(&alt).join("; ")
                )),
                Ok(()) => None,
            };
            e.result = Some(if diverged.is_some() { "diverged" } else { "same" }.to_string());
            self.emit(e);
            if let Some(msg) = diverged {
                return Err(Violation::new(ViolationKind::Divergence, msg));
            }
        }
        Ok(())
    }
}
