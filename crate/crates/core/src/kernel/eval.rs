//! Call-by-value conditional rewriting over ground values.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::kernel::expr::{Expr, ExprKind};
use crate::kernel::theory::{Interp, Native, OpId, Pattern, Theory};
use crate::kernel::value::{StateTag, Value};
use crate::sort::Sort;
use crate::store::Store;

pub type Bindings = BTreeMap<String, Value>;

/// Default limit on rule applications per evaluation.
pub const DEFAULT_BUDGET: usize = 10_000;
/// Limit on nested rule applications, guarding the native stack.
pub const DEFAULT_MAX_DEPTH: usize = 1_000;

/// The stores an expression may read: the two states around an invocation,
/// and the one read by state-interpreted operators that name no state.
#[derive(Clone, Copy)]
pub struct World<'a> {
    pub pre: &'a Store,
    pub post: &'a Store,
    pub default: &'a Store,
}

impl<'a> World<'a> {
    pub fn single(store: &'a Store) -> World<'a> {
        World {
            pre: store,
            post: store,
            default: store,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("stuck term `{term}`: no rule applies")]
    Stuck { term: String },
    #[error("rewrite budget of {limit} rule applications exceeded")]
    Budget { limit: usize },
    #[error("nesting depth limit of {limit} exceeded at `{op}`")]
    Depth { op: String, limit: usize },
    #[error("`{object}\\any` differs between pre ({pre}) and post ({post})")]
    AnyDisagreement { object: String, pre: String, post: String },
    #[error("`{op}` reads object state, but no state is available here")]
    NoState { op: String },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("{0}")]
    Domain(String),
}

pub struct Evaluator<'a> {
    pub theory: &'a Theory,
    pub world: Option<World<'a>>,
    pub env: &'a BTreeMap<String, Value>,
    pub budget: usize,
    pub max_depth: usize,
    steps: Cell<usize>,
    depth: Cell<usize>,
}

fn floor_div(a: i64, b: i64) -> Option<i64> {
    let q = a.checked_div(b)?;
    if a % b != 0 && ((a < 0) != (b < 0)) {
        Some(q - 1)
    } else {
        Some(q)
    }
}

fn match_pattern(p: &Pattern, v: &Value, b: &mut Bindings) -> bool {
    match p {
        Pattern::Var(x) => match b.get(x) {
            Some(old) => old == v,
            None => {
                b.insert(x.clone(), v.clone());
                true
            }
        },
        Pattern::Lit(l) => l == v,
        Pattern::Tuple(ps) => match v {
            Value::Tuple(_, fs) if fs.len() == ps.len() => ps.iter().zip(fs).all(|(p, f)| match_pattern(p, f, b)),
            _ => false,
        },
    }
}

impl<'a> Evaluator<'a> {
    pub fn new(theory: &'a Theory, env: &'a BTreeMap<String, Value>) -> Evaluator<'a> {
        Evaluator {
            theory,
            world: None,
            env,
            budget: DEFAULT_BUDGET,
            max_depth: DEFAULT_MAX_DEPTH,
            steps: Cell::new(0),
            depth: Cell::new(0),
        }
    }

    pub fn with_world(mut self, world: World<'a>) -> Evaluator<'a> {
        self.world = Some(world);
        self
    }

    pub fn steps(&self) -> usize {
        self.steps.get()
    }

    pub fn reset(&self) {
        self.steps.set(0);
        self.depth.set(0);
    }

    fn label(&self, v: &Value) -> String {
        match &self.world {
            Some(w) => w.default.display_value(v),
            None => v.to_string(),
        }
    }

    fn show_app(&self, id: OpId, args: &[Value]) -> String {
        let name = &self.theory.op(id).name;
        if args.is_empty() {
            return name.clone();
        }
        let parts: Vec<String> = args.iter().map(|a| self.label(a)).collect();
        format!("{name}({})", parts.join(", "))
    }

    /// Evaluates a Boolean expression.
    pub fn truth(&self, e: &Expr, b: &Bindings) -> Result<bool, EvalError> {
        match self.eval(e, b)? {
            Value::Bool(x) => Ok(x),
            other => Err(EvalError::Domain(format!("expected a truth value, got {}", self.label(&other)))),
        }
    }

    pub fn eval(&self, e: &Expr, b: &Bindings) -> Result<Value, EvalError> {
        match &e.kind {
            ExprKind::Var(v) => b.get(v).cloned().ok_or_else(|| EvalError::Unbound(v.clone())),
            ExprKind::Lit(v) => Ok(v.clone()),
            ExprKind::Op(id, args) => {
                let vals = args.iter().map(|a| self.eval(a, b)).collect::<Result<Vec<_>, _>>()?;
                self.apply(*id, vals)
            }
            ExprKind::Eq(x, y) | ExprKind::Neq(x, y) => {
                let vx = self.eval(x, b)?;
                let vy = self.eval(y, b)?;
                let eq = self.equal(&x.sort, &vx, &vy)?;
                Ok(Value::Bool(if matches!(e.kind, ExprKind::Eq(..)) { eq } else { !eq }))
            }
            ExprKind::Not(x) => Ok(Value::Bool(!self.truth(x, b)?)),
            ExprKind::And(x, y) => Ok(Value::Bool(self.truth(x, b)? && self.truth(y, b)?)),
            ExprKind::Or(x, y) => Ok(Value::Bool(self.truth(x, b)? || self.truth(y, b)?)),
            ExprKind::Implies(x, y) => Ok(Value::Bool(!self.truth(x, b)? || self.truth(y, b)?)),
            ExprKind::Iff(x, y) => Ok(Value::Bool(self.truth(x, b)? == self.truth(y, b)?)),
            ExprKind::Ite(c, x, y) => {
                if self.truth(c, b)? {
                    self.eval(x, b)
                } else {
                    self.eval(y, b)
                }
            }
            ExprKind::Tuple(fs) => Ok(Value::Tuple(
                e.sort.clone(),
                fs.iter().map(|f| self.eval(f, b)).collect::<Result<_, _>>()?,
            )),
            ExprKind::Proj(x, idx) => match self.eval(x, b)? {
                Value::Tuple(_, mut fs) if *idx < fs.len() => Ok(fs.swap_remove(*idx)),
                other => Err(EvalError::Domain(format!("cannot project from {}", self.label(&other)))),
            },
            ExprKind::Forall(vars, body) => {
                let mut domains = Vec::new();
                for (_, s) in vars {
                    domains.push(self.domain(s)?);
                }
                let mut inner = b.clone();
                Ok(Value::Bool(self.forall(vars, &domains, 0, body, &mut inner)?))
            }
        }
    }

    fn forall(
        &self,
        vars: &[(String, Sort)],
        domains: &[Vec<Value>],
        i: usize,
        body: &Expr,
        b: &mut Bindings,
    ) -> Result<bool, EvalError> {
        if i == vars.len() {
            return self.truth(body, b);
        }
        for v in &domains[i] {
            b.insert(vars[i].0.clone(), v.clone());
            if !self.forall(vars, domains, i + 1, body, b)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Finite run-time domain of a quantified sort.
    fn domain(&self, sort: &Sort) -> Result<Vec<Value>, EvalError> {
        if sort.is("Bool") {
            return Ok(vec![Value::Bool(false), Value::Bool(true)]);
        }
        if self.theory.is_object_sort(sort) {
            let w = self.world.ok_or_else(|| EvalError::NoState {
                op: format!("forall over {sort}"),
            })?;
            let mut ids: BTreeSet<_> = w.default.objects_of(sort).into_iter().collect();
            ids.extend(w.pre.objects_of(sort));
            return Ok(ids.into_iter().map(|id| Value::Obj(id, sort.clone())).collect());
        }
        Err(EvalError::Domain(format!("cannot quantify over sort {sort} at run time")))
    }

    /// Equality of two values of `sort`, through partition observers and tuple fields.
    pub fn equal(&self, sort: &Sort, a: &Value, b: &Value) -> Result<bool, EvalError> {
        if a == b {
            return Ok(true);
        }
        if let Some(obs) = self.theory.partitions.get(sort) {
            for o in obs {
                let x = self.apply(*o, vec![a.clone()])?;
                let y = self.apply(*o, vec![b.clone()])?;
                if !self.equal(&self.theory.op(*o).result, &x, &y)? {
                    return Ok(false);
                }
            }
            return Ok(true);
        }
        if let (Some(fields), Value::Tuple(_, xs), Value::Tuple(_, ys)) = (self.theory.tuples.get(sort), a, b) {
            if xs.len() != ys.len() || xs.len() != fields.len() {
                return Ok(false);
            }
            for ((f, x), y) in fields.iter().zip(xs).zip(ys) {
                if !self.equal(&f.sort, x, y)? {
                    return Ok(false);
                }
            }
            return Ok(true);
        }
        Ok(false)
    }

    fn world(&self, id: OpId) -> Result<World<'a>, EvalError> {
        self.world.ok_or_else(|| EvalError::NoState {
            op: self.theory.op(id).name.clone(),
        })
    }

    /// Applies an operator to evaluated arguments.
    pub fn apply(&self, id: OpId, args: Vec<Value>) -> Result<Value, EvalError> {
        let op = self.theory.op(id);
        match &op.interp {
            Interp::Native(n) => self.native(*n, &op.result, args),
            Interp::StateConst(tag) => Ok(Value::State(*tag)),
            Interp::ObjValue => {
                let w = self.world(id)?;
                let (Some(Value::Obj(obj, _)), Some(Value::State(tag))) = (args.first(), args.get(1)) else {
                    return Err(EvalError::Domain(format!("bad arguments to `{}`", op.name)));
                };
                let read = |store: &Store, which: &str| {
                    store.value(*obj).cloned().ok_or_else(|| {
                        EvalError::Domain(format!("object {} does not exist in the {which} state", w.default.label(*obj)))
                    })
                };
                match tag {
                    StateTag::Pre => read(w.pre, "pre"),
                    StateTag::Post => read(w.post, "post"),
                    StateTag::Any => {
                        let a = read(w.pre, "pre")?;
                        let b = read(w.post, "post")?;
                        if !self.equal(&op.result, &a, &b)? {
                            return Err(EvalError::AnyDisagreement {
                                object: w.default.label(*obj),
                                pre: w.pre.display_value(&a),
                                post: w.post.display_value(&b),
                            });
                        }
                        Ok(a)
                    }
                }
            }
            Interp::Relation => {
                let w = self.world(id)?;
                let Some(Value::Obj(holder, _)) = args.first() else {
                    return Err(EvalError::Domain(format!("bad argument to `{}`", op.name)));
                };
                let elem = self.theory.element_sort(&op.result).unwrap_or_else(|| op.result.clone());
                let set = w
                    .default
                    .related(&op.name, *holder)
                    .into_iter()
                    .map(|o| Value::Obj(o, elem.clone()))
                    .collect();
                Ok(Value::Set(op.result.clone(), set))
            }
            Interp::Inverse(rel) => {
                let w = self.world(id)?;
                let Some(Value::Obj(target, _)) = args.first() else {
                    return Err(EvalError::Domain(format!("bad argument to `{}`", op.name)));
                };
                let holders = w.default.holders(&self.theory.op(*rel).name, *target);
                match holders.as_slice() {
                    [h] => Ok(Value::Obj(*h, op.result.clone())),
                    [] => Err(EvalError::Stuck {
                        term: self.show_app(id, &args),
                    }),
                    _ => Err(EvalError::Domain(format!(
                        "`{}` is not unique: {} has {} holders",
                        op.name,
                        w.default.label(*target),
                        holders.len()
                    ))),
                }
            }
            Interp::Env => self
                .env
                .get(&op.name)
                .cloned()
                .ok_or_else(|| EvalError::Domain(format!("environment constant `{}` is not bound", op.name))),
            Interp::Rules(rules) => {
                let steps = self.steps.get() + 1;
                if steps > self.budget {
                    return Err(EvalError::Budget { limit: self.budget });
                }
                self.steps.set(steps);
                let depth = self.depth.get() + 1;
                if depth > self.max_depth {
                    return Err(EvalError::Depth {
                        op: op.name.clone(),
                        limit: self.max_depth,
                    });
                }
                self.depth.set(depth);
                let result = self.rewrite(id, rules, &args);
                self.depth.set(depth - 1);
                result
            }
            Interp::Undefined => Err(EvalError::Stuck {
                term: self.show_app(id, &args),
            }),
        }
    }

    fn rewrite(&self, id: OpId, rules: &[crate::kernel::theory::Rule], args: &[Value]) -> Result<Value, EvalError> {
        for rule in rules {
            let mut b = Bindings::new();
            if !rule.lhs.iter().zip(args).all(|(p, v)| match_pattern(p, v, &mut b)) {
                continue;
            }
            if let Some(c) = &rule.cond {
                if !self.truth(c, &b)? {
                    continue;
                }
            }
            return self.eval(&rule.rhs, &b);
        }
        Err(EvalError::Stuck {
            term: self.show_app(id, args),
        })
    }

    fn native(&self, n: Native, result: &Sort, args: Vec<Value>) -> Result<Value, EvalError> {
        let int = |i: usize| -> Result<i64, EvalError> {
            args.get(i)
                .and_then(Value::as_int)
                .ok_or_else(|| EvalError::Domain("integer argument expected".into()))
        };
        let overflow = || EvalError::Domain("integer overflow".into());
        let set = |i: usize| -> Result<BTreeSet<Value>, EvalError> {
            match args.get(i) {
                Some(Value::Set(_, s)) => Ok(s.clone()),
                _ => Err(EvalError::Domain("set argument expected".into())),
            }
        };
        Ok(match n {
            Native::True => Value::Bool(true),
            Native::False => Value::Bool(false),
            Native::Add => Value::Int(int(0)?.checked_add(int(1)?).ok_or_else(overflow)?),
            Native::Sub => Value::Int(int(0)?.checked_sub(int(1)?).ok_or_else(overflow)?),
            Native::Mul => Value::Int(int(0)?.checked_mul(int(1)?).ok_or_else(overflow)?),
            Native::Neg => Value::Int(int(0)?.checked_neg().ok_or_else(overflow)?),
            Native::Div | Native::Mod => {
                let (a, b) = (int(0)?, int(1)?);
                if b == 0 {
                    return Err(EvalError::Domain("division by zero".into()));
                }
                let q = floor_div(a, b).ok_or_else(overflow)?;
                if n == Native::Div {
                    Value::Int(q)
                } else {
                    Value::Int(a - b * q)
                }
            }
            Native::Lt => Value::Bool(int(0)? < int(1)?),
            Native::Le => Value::Bool(int(0)? <= int(1)?),
            Native::Gt => Value::Bool(int(0)? > int(1)?),
            Native::Ge => Value::Bool(int(0)? >= int(1)?),
            Native::Len => match args.first() {
                Some(Value::Str(s)) => Value::Int(s.chars().count() as i64),
                _ => return Err(EvalError::Domain("string argument expected".into())),
            },
            Native::Empty => Value::Set(result.clone(), BTreeSet::new()),
            Native::Insert => {
                let mut s = set(1)?;
                s.insert(args[0].clone());
                Value::Set(result.clone(), s)
            }
            Native::Delete => {
                let mut s = set(1)?;
                s.remove(&args[0]);
                Value::Set(result.clone(), s)
            }
            Native::In => Value::Bool(set(1)?.contains(&args[0])),
            Native::NotIn => Value::Bool(!set(1)?.contains(&args[0])),
            Native::Size => Value::Int(set(0)?.len() as i64),
            Native::Contained => Value::Set(result.clone(), set(0)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::floor_div;

    #[test]
    fn floor_division_rounds_down() {
        assert_eq!(floor_div(7, 2), Some(3));
        assert_eq!(floor_div(-7, 2), Some(-4));
        assert_eq!(floor_div(7, -2), Some(-4));
        assert_eq!(floor_div(-1, 86400), Some(-1));
    }
}
