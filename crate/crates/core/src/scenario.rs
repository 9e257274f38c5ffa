//! Scenario files: a TOML description of a store to build, a script to run and checks to make.
//!
//! ```toml
//! seed = 42
//! perm_samples = 5
//!
//! [env]
//! currentTime = "[10, 0, 0]"
//!
//! [[setup]]
//! object = "m"
//! sort = "MasterClock"
//! value = "[10, 0, 0]"
//!
//! [[setup]]
//! object = "z1"
//! new = "ZonalClock(m)"
//! value = '["CET", 3600, [0, 0, 0]]'
//!
//! [[script]]
//! call = "m.SetChange()"
//!
//! [[script]]
//! check = "isConsistent(m, z1, post)"
//! name = "z1 follows m"
//! ```
//!
//! Object labels are variables in every term of the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::engine::{Engine, Event, Policy, System, Violation};
use crate::kernel::eval::{Bindings, Evaluator, World};
use crate::kernel::expr::{Elaborator, Expr, Scope};
use crate::kernel::theory::{Interp, Theory};
use crate::kernel::value::Value;
use crate::sort::Sort;
use crate::store::Store;
use crate::syntax::ast::{ActionKind, TermKind};
use crate::syntax::{parse_action, parse_term};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: Option<u64>,
    pub perm_samples: Option<usize>,
    /// Environment constants by operator name.
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default)]
    pub setup: Vec<SetupStep>,
    #[serde(default)]
    pub script: Vec<ScriptStep>,
}

/// Creates one object: either directly with `sort`, or through a constructor call `new`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupStep {
    pub object: String,
    pub sort: Option<String>,
    pub new: Option<String>,
    pub value: String,
}

/// Either a `call` or a named `check`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    pub call: Option<String>,
    pub check: Option<String>,
    pub name: Option<String>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Format(#[from] toml::de::Error),
    #[error("{what}: {message}")]
    Reference { what: String, message: String },
}

fn reference(what: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Reference {
        what: what.into(),
        message: message.into(),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        Scenario::parse(&std::fs::read_to_string(path)?)
    }
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    Violation(Violation),
    CheckFailed { name: String },
}

#[derive(Clone, Debug)]
pub struct Run {
    pub trace: Vec<Event>,
    pub store: Store,
    pub status: Status,
}

enum Step {
    Create {
        label: String,
        sort: Sort,
        value: Value,
    },
    Construct {
        label: String,
        class: String,
        value: Value,
        args: Vec<Expr>,
        theory: Arc<Theory>,
    },
    Call {
        receiver: String,
        method: String,
        args: Vec<Expr>,
        theory: Arc<Theory>,
    },
    Check {
        name: String,
        expr: Expr,
        theory: Arc<Theory>,
    },
}

struct Resolver<'s> {
    sys: &'s System,
    scope: Scope,
    empty: Store,
}

impl Resolver<'_> {
    fn theories(&self) -> Vec<Arc<Theory>> {
        // Largest theories first, so combined vocabularies resolve.
        let mut all: Vec<Arc<Theory>> = self.sys.theories.values().cloned().collect();
        all.sort_by_key(|t| std::cmp::Reverse(t.ops.len()));
        all
    }

    fn role_theory(&self, class: &str, what: &str) -> Result<Arc<Theory>, ScenarioError> {
        self.sys
            .role(class)
            .map(|r| r.theory.clone())
            .ok_or_else(|| reference(what, format!("unknown role {class}")))
    }

    fn elaborate(&self, th: &Theory, src: &str, sort: Option<&Sort>, what: &str) -> Result<Expr, ScenarioError> {
        let term = parse_term(src).map_err(|e| reference(what, e.to_string()))?;
        let mut el = Elaborator::new(th);
        let e = match sort {
            Some(s) => el.check(&term, &self.scope, s),
            None => el.check_bool(&term, &self.scope),
        };
        e.map_err(|e| reference(what, e.message))
    }

    /// A closed value term, evaluated at once.
    fn value(&self, th: &Theory, src: &str, sort: &Sort, what: &str) -> Result<Value, ScenarioError> {
        let e = self.elaborate(th, src, Some(sort), what)?;
        let env = BTreeMap::new();
        Evaluator::new(th, &env)
            .with_world(World::single(&self.empty))
            .eval(&e, &Bindings::new())
            .map_err(|err| reference(what, err.to_string()))
    }

    fn label_sort(&self, label: &str) -> Option<&Sort> {
        self.scope.iter().find(|(v, _)| v == label).map(|(_, s)| s)
    }

    fn declare(&mut self, label: &str, sort: Sort, what: &str) -> Result<(), ScenarioError> {
        if self.label_sort(label).is_some() {
            return Err(reference(what, format!("object `{label}` is created twice")));
        }
        self.scope.push((label.to_string(), sort));
        Ok(())
    }

    fn args(&self, th: &Theory, args: &[crate::syntax::ast::Term], sorts: &[Sort], what: &str) -> Result<Vec<Expr>, ScenarioError> {
        if args.len() != sorts.len() {
            return Err(reference(what, format!("expected {} argument(s), got {}", sorts.len(), args.len())));
        }
        args.iter()
            .zip(sorts)
            .map(|(a, s)| {
                Elaborator::new(th)
                    .check(a, &self.scope, s)
                    .map_err(|e| reference(what, e.message))
            })
            .collect()
    }

    fn setup(&mut self, i: usize, s: &SetupStep) -> Result<Step, ScenarioError> {
        let what = format!("setup[{i}] ({})", s.object);
        match (&s.sort, &s.new) {
            (Some(sort), None) => {
                let th = self.role_theory(sort, &what)?;
                let role = &self.sys.roles[sort];
                let vs = th.object_sorts[&role.sort].clone();
                let value = self.value(&th, &s.value, &vs, &what)?;
                self.declare(&s.object, role.sort.clone(), &what)?;
                Ok(Step::Create {
                    label: s.object.clone(),
                    sort: role.sort.clone(),
                    value,
                })
            }
            (None, Some(new)) => {
                let term = parse_term(new).map_err(|e| reference(&what, e.to_string()))?;
                let (class, args) = match term.kind {
                    TermKind::App(f, args) => (f, args),
                    TermKind::Id(f) => (f, vec![]),
                    _ => return Err(reference(&what, "`new` must be a constructor call")),
                };
                let th = self.role_theory(&class, &what)?;
                let role = &self.sys.roles[&class];
                let ctor = role
                    .methods
                    .iter()
                    .find(|m| m.constructs)
                    .ok_or_else(|| reference(&what, format!("role {class} has no constructor")))?;
                let sorts: Vec<Sort> = ctor.params.iter().map(|(_, s)| s.clone()).collect();
                let args = self.args(&th, &args, &sorts, &what)?;
                let vs = th.object_sorts[&role.sort].clone();
                let value = self.value(&th, &s.value, &vs, &what)?;
                self.declare(&s.object, role.sort.clone(), &what)?;
                Ok(Step::Construct {
                    label: s.object.clone(),
                    class,
                    value,
                    args,
                    theory: th,
                })
            }
            _ => Err(reference(what, "give exactly one of `sort` and `new`")),
        }
    }

    fn script(&self, i: usize, s: &ScriptStep) -> Result<Step, ScenarioError> {
        match (&s.call, &s.check) {
            (Some(call), None) => {
                let what = format!("script[{i}] ({call})");
                let action = parse_action(call).map_err(|e| reference(&what, e.to_string()))?;
                let ActionKind::Invoke {
                    receiver: Some(recv),
                    method,
                    args,
                } = action.kind
                else {
                    return Err(reference(what, "expected a single call `object.Method(args)`"));
                };
                let TermKind::Id(label) = recv.kind else {
                    return Err(reference(what, "the receiver must be an object label"));
                };
                let sort = self
                    .label_sort(&label)
                    .ok_or_else(|| reference(&what, format!("unknown object `{label}`")))?;
                let class = sort.to_string();
                let th = self.role_theory(&class, &what)?;
                let c = self
                    .sys
                    .contract(&class, &method)
                    .ok_or_else(|| reference(&what, format!("role {class} has no method `{method}`")))?;
                if c.constructs {
                    return Err(reference(what, "constructors are invoked from `setup`"));
                }
                let sorts: Vec<Sort> = c.params.iter().map(|(_, s)| s.clone()).collect();
                let args = self.args(&th, &args, &sorts, &what)?;
                Ok(Step::Call {
                    receiver: label,
                    method,
                    args,
                    theory: th,
                })
            }
            (None, Some(check)) => {
                let name = s.name.clone().unwrap_or_else(|| check.clone());
                let what = format!("script[{i}] ({name})");
                let mut last = None;
                for th in self.theories() {
                    match self.elaborate(&th, check, None, &what) {
                        Ok(expr) => return Ok(Step::Check { name, expr, theory: th }),
                        Err(e) => last = Some(e),
                    }
                }
                Err(last.unwrap_or_else(|| reference(what, "no theory to check against")))
            }
            _ => Err(reference(format!("script[{i}]"), "give exactly one of `call` and `check`")),
        }
    }
}

fn resolve_env(r: &Resolver, env: &BTreeMap<String, String>) -> Result<BTreeMap<String, Value>, ScenarioError> {
    let mut out = BTreeMap::new();
    for (name, src) in env {
        let what = format!("env.{name}");
        let found = r.theories().into_iter().find_map(|th| {
            th.ops_named(name)
                .find(|id| th.op(*id).interp == Interp::Env)
                .map(|id| (th.op(id).result.clone(), th.clone()))
        });
        let Some((sort, th)) = found else {
            return Err(reference(what, "not an environment constant"));
        };
        out.insert(name.clone(), r.value(&th, src, &sort, &what)?);
    }
    Ok(out)
}

/// Resolves every reference in `scenario`, then runs it.
///
/// Reference errors are reported before anything executes.
pub fn run_scenario(sys: &System, scenario: &Scenario, policy: Policy) -> Result<Run, ScenarioError> {
    let mut r = Resolver {
        sys,
        scope: Scope::new(),
        empty: Store::new(),
    };
    let env = resolve_env(&r, &scenario.env)?;
    let mut steps = Vec::new();
    for (i, s) in scenario.setup.iter().enumerate() {
        steps.push(r.setup(i, s)?);
    }
    for (i, s) in scenario.script.iter().enumerate() {
        steps.push(r.script(i, s)?);
    }

    let mut store = Store::new();
    let mut engine = Engine::new(sys, policy, env.clone());
    let mut labels = Bindings::new();
    let eval_args = |th: &Theory, args: &[Expr], labels: &Bindings, store: &Store| -> Result<Vec<Value>, ScenarioError> {
        let ev = Evaluator::new(th, &env).with_world(World::single(store));
        args.iter()
            .map(|a| ev.eval(a, labels).map_err(|e| reference("argument", e.to_string())))
            .collect()
    };
    let mut status = Status::Ok;
    for step in steps {
        match step {
            Step::Create { label, sort, value } => {
                let mut e = Event::new("create", 0);
                e.receiver = Some(label.clone());
                e.method = Some(sort.to_string());
                e.args = Some(vec![store.display_value(&value)]);
                engine.emit(e);
                let id = store.alloc(sort.clone(), label.clone(), value);
                labels.insert(label, Value::Obj(id, sort));
            }
            Step::Construct {
                label,
                class,
                value,
                args,
                theory,
            } => {
                let args = eval_args(&theory, &args, &labels, &store)?;
                match engine.construct(&mut store, &class, &label, value, args) {
                    Ok(id) => {
                        let sort = store.sort(id).cloned().expect("constructed object exists");
                        labels.insert(label, Value::Obj(id, sort));
                    }
                    Err(v) => {
                        status = Status::Violation(v);
                        break;
                    }
                }
            }
            Step::Call {
                receiver,
                method,
                args,
                theory,
            } => {
                let args = eval_args(&theory, &args, &labels, &store)?;
                let id = labels[&receiver].as_obj().expect("labels bind objects");
                if let Err(v) = engine.call(&mut store, id, &method, args) {
                    status = Status::Violation(v);
                    break;
                }
            }
            Step::Check { name, expr, theory } => {
                let ev = Evaluator::new(&theory, &env).with_world(World::single(&store));
                let holds = ev.truth(&expr, &labels);
                let mut e = Event::new("check", 0);
                e.method = Some(name.clone());
                e.result = Some(match &holds {
                    Ok(b) => b.to_string(),
                    Err(err) => format!("error: {err}"),
                });
                engine.emit(e);
                if holds != Ok(true) {
                    status = Status::CheckFailed { name };
                    break;
                }
            }
        }
    }
    Ok(Run {
        trace: engine.take_trace(),
        store,
        status,
    })
}
