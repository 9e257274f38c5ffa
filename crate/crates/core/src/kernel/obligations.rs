//! Bounded testing of `implies` equations, unoriented axioms and partitions.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::kernel::eval::{Bindings, EvalError, Evaluator};
use crate::kernel::expr::{Elaborator, Expr, ExprKind};
use crate::kernel::theory::{Axiom, AxiomKind, AxiomStatus, Interp, OpId, Theory};
use crate::kernel::value::Value;
use crate::sort::{ObjId, Sort};

/// Value generators and case counts for obligation testing.
#[derive(Clone, Debug)]
pub struct Budget {
    pub seed: u64,
    pub random_count: usize,
    /// Exhaustive grids keyed by sort name (`Int`) or tuple field (`Time.hour`).
    pub grids: BTreeMap<String, Vec<Value>>,
    /// Inclusive ranges for random integers, keyed like `grids`.
    pub ranges: BTreeMap<String, (i64, i64)>,
    pub strings: Vec<String>,
    /// Number of distinct object identities per object sort.
    pub object_pool: u32,
    /// Cap on the size of a grid product.
    pub max_grid: usize,
}

fn ints(xs: &[i64]) -> Vec<Value> {
    xs.iter().map(|x| Value::Int(*x)).collect()
}

impl Default for Budget {
    fn default() -> Budget {
        let mut grids = BTreeMap::new();
        grids.insert("Int".to_string(), ints(&[-1, 0, 1, 2, 59, 60, 3600]));
        grids.insert("Time.hour".to_string(), ints(&[0, 1, 23]));
        grids.insert("Time.minute".to_string(), ints(&[0, 1, 59]));
        grids.insert("Time.second".to_string(), ints(&[0, 1, 59]));
        grids.insert("Zone.zonalOffset".to_string(), ints(&[0, 3600, -18000]));
        grids.insert("Zone.zonalName".to_string(), vec![Value::Str("UTC".into())]);
        let mut ranges = BTreeMap::new();
        ranges.insert("Int".to_string(), (-100_000, 100_000));
        ranges.insert("Time.hour".to_string(), (0, 23));
        ranges.insert("Time.minute".to_string(), (0, 59));
        ranges.insert("Time.second".to_string(), (0, 59));
        ranges.insert("Zone.zonalOffset".to_string(), (-43_200, 50_400));
        Budget {
            seed: 42,
            random_count: 1000,
            grids,
            ranges,
            strings: ["UTC", "CET", "EST", "JST"].iter().map(|s| s.to_string()).collect(),
            object_pool: 3,
            max_grid: 10_000,
        }
    }
}

impl Budget {
    /// Overrides one grid from `key=v1,v2,...`; integers, or strings otherwise.
    pub fn set_grid(&mut self, spec: &str) -> Result<(), String> {
        let (key, vals) = spec
            .split_once('=')
            .ok_or_else(|| format!("grid override `{spec}` is not of the form key=v1,v2,..."))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("grid override `{spec}` has an empty key"));
        }
        let values: Vec<Value> = vals
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| match v.parse::<i64>() {
                Ok(n) => Value::Int(n),
                Err(_) => Value::Str(v.trim_matches('"').to_string()),
            })
            .collect();
        if values.is_empty() {
            return Err(format!("grid override `{spec}` lists no values"));
        }
        self.grids.insert(key.to_string(), values);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Reads object state; checked as a store invariant during simulation.
    Deferred,
    /// Not testable (`generated by`).
    Assumed,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct ObligationResult {
    pub origin: String,
    pub kind: &'static str,
    pub text: String,
    pub verdict: Verdict,
    pub cases: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<BTreeMap<String, String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

enum GenError {
    Deferred,
    Missing(Sort),
}

struct Gen<'a> {
    th: &'a Theory,
    budget: &'a Budget,
}

impl Gen<'_> {
    fn key(sort: &Sort, field: Option<&str>) -> Option<String> {
        field.map(|f| format!("{sort}.{f}"))
    }

    fn grid(&self, sort: &Sort, key: Option<&str>) -> Result<Vec<Value>, GenError> {
        if let Some(g) = key.and_then(|k| self.budget.grids.get(k)) {
            return Ok(g.clone());
        }
        if let Some(g) = self.budget.grids.get(&sort.to_string()) {
            return Ok(g.clone());
        }
        let th = self.th;
        if sort.is("Bool") {
            return Ok(vec![Value::Bool(false), Value::Bool(true)]);
        }
        if sort.is("String") {
            return Ok(self.budget.strings.iter().take(1).map(|s| Value::Str(s.clone())).collect());
        }
        if sort.is("State") {
            return Err(GenError::Deferred);
        }
        if let Some(fields) = th.tuples.get(sort) {
            let mut acc: Vec<Vec<Value>> = vec![vec![]];
            for f in fields {
                let key = Self::key(sort, Some(&f.name));
                let g = self.grid(&f.sort, key.as_deref())?;
                let mut next = Vec::new();
                'outer: for prefix in &acc {
                    for v in &g {
                        if next.len() >= self.budget.max_grid {
                            break 'outer;
                        }
                        let mut p = prefix.clone();
                        p.push(v.clone());
                        next.push(p);
                    }
                }
                acc = next;
            }
            return Ok(acc.into_iter().map(|fs| Value::Tuple(sort.clone(), fs)).collect());
        }
        if th.is_object_sort(sort) {
            return Ok((1..=self.budget.object_pool).map(|i| Value::Obj(ObjId(i), sort.clone())).collect());
        }
        if let Some(elem) = th.element_sort(sort) {
            let elems = self.grid(&elem, None)?;
            let mut out = vec![Value::Set(sort.clone(), BTreeSet::new())];
            if elems.len() <= 4 {
                for mask in 1u32..(1 << elems.len()) {
                    let s = elems
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(_, v)| v.clone())
                        .collect();
                    out.push(Value::Set(sort.clone(), s));
                }
            } else {
                out.extend(elems.into_iter().map(|e| Value::Set(sort.clone(), [e].into_iter().collect())));
            }
            return Ok(out);
        }
        Err(GenError::Missing(sort.clone()))
    }

    fn random(&self, sort: &Sort, key: Option<&str>, rng: &mut ChaCha8Rng) -> Result<Value, GenError> {
        let th = self.th;
        if sort.is("Int") {
            let (lo, hi) = key
                .and_then(|k| self.budget.ranges.get(k))
                .or_else(|| self.budget.ranges.get("Int"))
                .copied()
                .unwrap_or((-1000, 1000));
            return Ok(Value::Int(rng.random_range(lo..=hi)));
        }
        if sort.is("Bool") {
            return Ok(Value::Bool(rng.random()));
        }
        if sort.is("String") {
            if self.budget.strings.is_empty() {
                return Ok(Value::Str(String::new()));
            }
            let i = rng.random_range(0..self.budget.strings.len());
            return Ok(Value::Str(self.budget.strings[i].clone()));
        }
        if sort.is("State") {
            return Err(GenError::Deferred);
        }
        if let Some(fields) = th.tuples.get(sort) {
            let mut fs = Vec::new();
            for f in fields {
                let key = Self::key(sort, Some(&f.name));
                fs.push(self.random(&f.sort, key.as_deref(), rng)?);
            }
            return Ok(Value::Tuple(sort.clone(), fs));
        }
        if th.is_object_sort(sort) {
            let i = rng.random_range(1..=self.budget.object_pool.max(1));
            return Ok(Value::Obj(ObjId(i), sort.clone()));
        }
        if let Some(elem) = th.element_sort(sort) {
            let elems = self.grid(&elem, None)?;
            let s = elems.into_iter().filter(|_| rng.random_bool(0.5)).collect();
            return Ok(Value::Set(sort.clone(), s));
        }
        Err(GenError::Missing(sort.clone()))
    }
}

fn text_seed(seed: u64, text: &str) -> u64 {
    // FNV-1a keeps per-obligation streams independent of report order.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Free variables of the expressions, with sorts.
fn quantified(exprs: &[&Expr]) -> Vec<(String, Sort)> {
    let mut out: Vec<(String, Sort)> = Vec::new();
    for e in exprs {
        let names = e.free_vars();
        e.visit(&mut |x| {
            if let ExprKind::Var(v) = &x.kind {
                if names.contains(v) && !out.iter().any(|(n, _)| n == v) {
                    out.push((v.clone(), x.sort.clone()));
                }
            }
        });
    }
    out
}

fn env_consts(th: &Theory, exprs: &[&Expr]) -> Vec<OpId> {
    let mut out = Vec::new();
    for e in exprs {
        for id in e.ops() {
            if th.op(id).interp == Interp::Env && !out.contains(&id) {
                out.push(id);
            }
        }
    }
    out
}

/// Iterates the grid product (capped) and then `random` random cases.
struct Cases<'a> {
    gen: Gen<'a>,
    sorts: Vec<Sort>,
    grids: Vec<Vec<Value>>,
    index: Vec<usize>,
    grid_left: usize,
    random_left: usize,
    rng: ChaCha8Rng,
}

impl<'a> Cases<'a> {
    fn new(gen: Gen<'a>, sorts: Vec<Sort>, seed: u64) -> Result<Cases<'a>, GenError> {
        let grids = sorts.iter().map(|s| gen.grid(s, None)).collect::<Result<Vec<_>, _>>()?;
        let total = grids.iter().fold(1usize, |acc, g| acc.saturating_mul(g.len()));
        let grid_left = total.min(gen.budget.max_grid);
        let random_left = gen.budget.random_count;
        Ok(Cases {
            index: vec![0; sorts.len()],
            gen,
            sorts,
            grids,
            grid_left,
            random_left,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn next(&mut self) -> Result<Option<Vec<Value>>, GenError> {
        if self.grid_left > 0 {
            self.grid_left -= 1;
            let case = self.index.iter().zip(&self.grids).map(|(i, g)| g[*i].clone()).collect();
            for k in (0..self.index.len()).rev() {
                self.index[k] += 1;
                if self.index[k] < self.grids[k].len() {
                    break;
                }
                self.index[k] = 0;
            }
            return Ok(Some(case));
        }
        if self.random_left > 0 {
            self.random_left -= 1;
            let mut case = Vec::with_capacity(self.sorts.len());
            for s in &self.sorts {
                case.push(self.gen.random(s, None, &mut self.rng)?);
            }
            return Ok(Some(case));
        }
        Ok(None)
    }
}

fn result(ax_origin: &str, kind: &'static str, text: &str, verdict: Verdict) -> ObligationResult {
    ObligationResult {
        origin: ax_origin.to_string(),
        kind,
        text: text.to_string(),
        verdict,
        cases: 0,
        counterexample: None,
        detail: None,
    }
}

fn check_axiom(th: &Theory, ax: &Axiom, budget: &Budget) -> ObligationResult {
    let kind = match (ax.kind, ax.status) {
        (AxiomKind::Implies, _) => "implies",
        (_, AxiomStatus::Overridden) => "overridden-axiom",
        _ => "axiom",
    };
    let mut out = result(&ax.origin, kind, &ax.text, Verdict::Pass);
    let exprs: Vec<&Expr> = std::iter::once(&ax.lhs).chain(ax.rhs.as_ref()).collect();
    let el = Elaborator::new(th);
    if exprs.iter().any(|e| el.is_stateful(e)) {
        out.verdict = Verdict::Deferred;
        out.detail = Some("reads object state; enforced as a store invariant during simulation".into());
        return out;
    }
    let vars = quantified(&exprs);
    let envs = env_consts(th, &exprs);
    let mut sorts: Vec<Sort> = vars.iter().map(|(_, s)| s.clone()).collect();
    sorts.extend(envs.iter().map(|id| th.op(*id).result.clone()));
    let gen = Gen { th, budget };
    let mut cases = match Cases::new(gen, sorts, text_seed(budget.seed, &ax.text)) {
        Ok(c) => c,
        Err(GenError::Deferred) => {
            out.verdict = Verdict::Deferred;
            out.detail = Some("quantifies over states".into());
            return out;
        }
        Err(GenError::Missing(s)) => {
            out.verdict = Verdict::Error;
            out.detail = Some(format!("no value generator for sort {s}"));
            return out;
        }
    };
    loop {
        let case = match cases.next() {
            Ok(Some(c)) => c,
            Ok(None) => break,
            Err(GenError::Missing(s)) => {
                out.verdict = Verdict::Error;
                out.detail = Some(format!("no value generator for sort {s}"));
                return out;
            }
            Err(GenError::Deferred) => {
                out.verdict = Verdict::Deferred;
                return out;
            }
        };
        out.cases += 1;
        let mut b = Bindings::new();
        let mut env = BTreeMap::new();
        for (i, v) in case.iter().enumerate() {
            if i < vars.len() {
                b.insert(vars[i].0.clone(), v.clone());
            } else {
                env.insert(th.op(envs[i - vars.len()]).name.clone(), v.clone());
            }
        }
        let ev = Evaluator::new(th, &env);
        let verdict: Result<bool, EvalError> = match &ax.rhs {
            None => ev.truth(&ax.lhs, &b),
            Some(r) => (|| {
                let x = ev.eval(&ax.lhs, &b)?;
                ev.reset();
                let y = ev.eval(r, &b)?;
                ev.equal(&ax.lhs.sort, &x, &y)
            })(),
        };
        let failed = match verdict {
            Ok(true) => continue,
            Ok(false) => None,
            Err(e) => Some(e.to_string()),
        };
        let mut ce: BTreeMap<String, String> = b.iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
        ce.extend(env.iter().map(|(k, v)| (k.clone(), v.to_string())));
        out.verdict = Verdict::Fail;
        out.counterexample = Some(ce);
        out.detail = failed;
        return out;
    }
    out
}

/// Checks that equality by observers is preserved by every operator over the sort.
fn check_partition(th: &Theory, sort: &Sort, observers: &[OpId], budget: &Budget) -> ObligationResult {
    let names: Vec<&str> = observers.iter().map(|o| th.op(*o).name.as_str()).collect();
    let text = format!("{sort} partitioned by {}", names.join(", "));
    let origin = observers
        .first()
        .and_then(|o| th.op(*o).origins.last().cloned())
        .unwrap_or_else(|| th.name.clone());
    let mut out = result(&origin, "partition", &text, Verdict::Pass);
    let gen = Gen { th, budget };
    let Ok(values) = gen.grid(sort, None) else {
        out.verdict = Verdict::Error;
        out.detail = Some(format!("no value generator for sort {sort}"));
        return out;
    };
    let env = BTreeMap::new();
    let ev = Evaluator::new(th, &env);
    let mut rng = ChaCha8Rng::seed_from_u64(text_seed(budget.seed, &text));
    let mut pairs = Vec::new();
    for a in &values {
        for b in &values {
            ev.reset();
            if matches!(ev.equal(sort, a, b), Ok(true)) {
                pairs.push((a.clone(), b.clone()));
            }
        }
    }
    for _ in 0..budget.random_count {
        let (Ok(a), Ok(b)) = (gen.random(sort, None, &mut rng), gen.random(sort, None, &mut rng)) else { break };
        ev.reset();
        if matches!(ev.equal(sort, &a, &b), Ok(true)) {
            pairs.push((a, b));
        }
    }
    let el = Elaborator::new(th);
    let _ = &el;
    for (id, op) in th.ops.iter().enumerate() {
        let id = OpId(id);
        if observers.contains(&id) || !matches!(op.interp, Interp::Rules(_)) || !op.args.contains(sort) {
            continue;
        }
        if op.args.iter().any(|s| s.is("State") || th.is_object_sort(s)) {
            continue;
        }
        for (a, b) in &pairs {
            for pos in op.args.iter().enumerate().filter(|(_, s)| *s == sort).map(|(i, _)| i) {
                let mut xs = Vec::new();
                for s in &op.args {
                    match gen.random(s, None, &mut rng) {
                        Ok(v) => xs.push(v),
                        Err(_) => break,
                    }
                }
                if xs.len() != op.args.len() {
                    break;
                }
                let mut ys = xs.clone();
                xs[pos] = a.clone();
                ys[pos] = b.clone();
                out.cases += 1;
                ev.reset();
                let fx = ev.apply(id, xs);
                ev.reset();
                let fy = ev.apply(id, ys);
                let same = match (fx, fy) {
                    (Ok(x), Ok(y)) => matches!(ev.equal(&op.result, &x, &y), Ok(true)),
                    (Err(_), Err(_)) => true,
                    _ => false,
                };
                if !same {
                    out.verdict = Verdict::Fail;
                    out.counterexample = Some(BTreeMap::from([
                        ("left".to_string(), a.to_string()),
                        ("right".to_string(), b.to_string()),
                    ]));
                    out.detail = Some(format!("`{}` distinguishes observer-equal arguments", op.name));
                    return out;
                }
            }
        }
    }
    out.detail = Some(format!("{} observer-equal pairs", pairs.len()));
    out
}

/// Runs every testable obligation of the theory.
pub fn check_obligations(th: &Theory, budget: &Budget) -> Vec<ObligationResult> {
    let mut out = Vec::new();
    for ax in &th.axioms {
        if ax.status == AxiomStatus::Rule {
            continue;
        }
        out.push(check_axiom(th, ax, budget));
    }
    for (sort, obs) in &th.partitions {
        out.push(check_partition(th, sort, obs, budget));
    }
    for (sort, ops) in &th.generators {
        let mut r = result(&th.name, "generated", &format!("{sort} generated by {}", ops.join(", ")), Verdict::Assumed);
        r.detail = Some("induction principle is recorded, not tested".into());
        out.push(r);
    }
    out
}

/// A random value of `sort` drawn from the budget's generators, if one exists.
pub fn random_value(th: &Theory, budget: &Budget, sort: &Sort, rng: &mut ChaCha8Rng) -> Option<Value> {
    Gen { th, budget }.random(sort, None, rng).ok()
}
