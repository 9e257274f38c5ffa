//! Sampled checks over random stores: bodies against contracts, and independence.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::exec::{Engine, Policy, ViolationKind};
use super::{BodyDef, System};
use crate::kernel::obligations::{random_value, Budget};
use crate::kernel::theory::{Interp, Theory};
use crate::kernel::value::Value;
use crate::roles::{bindings, eval_requires, MethodContract};
use crate::sort::{ObjId, Sort};
use crate::store::Store;

fn prefixes(sys: &System) -> BTreeMap<String, String> {
    let firsts: Vec<char> = sys.roles.keys().filter_map(|n| n.chars().next()).collect();
    sys.roles
        .keys()
        .map(|n| {
            let c = n.chars().next().unwrap_or('o');
            let p = if firsts.iter().filter(|f| **f == c).count() > 1 {
                n.to_lowercase()
            } else {
                c.to_lowercase().to_string()
            };
            (n.clone(), p)
        })
        .collect()
}

/// A store with one to three objects per role, each related object attached to a random holder.
pub fn random_store(sys: &System, budget: &Budget, rng: &mut ChaCha8Rng) -> Store {
    let mut store = Store::new();
    let names = prefixes(sys);
    let mut relations: BTreeMap<String, (Sort, Sort)> = BTreeMap::new();
    for role in sys.roles.values() {
        let th = &role.theory;
        for op in &th.ops {
            if op.interp == Interp::Relation {
                if let Some(target) = th.element_sort(&op.result) {
                    relations.insert(op.name.clone(), (op.args[0].clone(), target));
                }
            }
        }
        let Some(value_sort) = th.object_sorts.get(&role.sort) else { continue };
        let n = rng.random_range(1..=3);
        for i in 1..=n {
            if let Some(v) = random_value(th, budget, value_sort, rng) {
                store.alloc(role.sort.clone(), format!("{}{i}", names[&role.name]), v);
            }
        }
    }
    for (rel, (holder, target)) in relations {
        let holders = store.objects_of(&holder);
        for t in store.objects_of(&target) {
            if let Some(h) = holders.choose(rng) {
                store.relate(&rel, *h, t);
            }
        }
    }
    store
}

fn env_for(th: &Theory, budget: &Budget, rng: &mut ChaCha8Rng) -> BTreeMap<String, Value> {
    th.env_consts()
        .into_iter()
        .filter_map(|id| {
            let op = th.op(id);
            random_value(th, budget, &op.result, rng).map(|v| (op.name.clone(), v))
        })
        .collect()
}

fn sample_args(th: &Theory, c: &MethodContract, store: &Store, budget: &Budget, rng: &mut ChaCha8Rng) -> Option<Vec<Value>> {
    c.params
        .iter()
        .map(|(_, s)| {
            if th.is_object_sort(s) {
                store.objects_of(s).choose(rng).map(|id| Value::Obj(*id, s.clone()))
            } else {
                random_value(th, budget, s, rng)
            }
        })
        .collect()
}

#[derive(Clone)]
enum Target {
    Existing(ObjId),
    Fresh(Value),
}

/// Picks a receiver and arguments satisfying `requires`, if the store has any.
fn pick(
    sys: &System,
    def: &BodyDef,
    store: &Store,
    budget: &Budget,
    env: &BTreeMap<String, Value>,
    rng: &mut ChaCha8Rng,
) -> Option<(Target, Vec<Value>)> {
    let role = sys.role(&def.class)?;
    let c = role.method(&def.name)?;
    let th = &role.theory;
    let args = sample_args(th, c, store, budget, rng)?;
    if c.constructs {
        let v = random_value(th, budget, th.object_sorts.get(&role.sort)?, rng)?;
        return Some((Target::Fresh(v), args));
    }
    let mut candidates = store.objects_of(&role.sort);
    candidates.shuffle(rng);
    for id in candidates {
        let b = bindings(c, id, &role.sort, &args, None);
        if eval_requires(th, c, store, &b, env).unwrap_or(false) {
            return Some((Target::Existing(id), args));
        }
    }
    None
}

fn run(engine: &mut Engine, def: &BodyDef, store: &mut Store, target: &Target, args: &[Value], n: usize) -> Result<(), String> {
    let r = match target {
        Target::Existing(id) => engine.call(store, *id, &def.name, args.to_vec()).map(|_| ()),
        Target::Fresh(v) => engine
            .construct(store, &def.class, &format!("new{n}"), v.clone(), args.to_vec())
            .map(|_| ()),
    };
    r.map_err(|v| v.to_string())
}

#[derive(Clone, Debug, Serialize)]
pub struct RedundancyResult {
    pub class: String,
    pub method: String,
    pub samples: usize,
    /// Samples (including replays) where some receiver satisfied the requires clause.
    pub conforming: usize,
    /// `pass`, `fail` or `vacuous`.
    pub verdict: &'static str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

/// Runs every interaction body against its same-named contract over random stores.
///
/// Each conforming sample is replayed once on its own result, which covers already-done cases.
pub fn check_redundancy(sys: &System, budget: &Budget, samples: usize, while_cap: usize) -> Vec<RedundancyResult> {
    let mut out = Vec::new();
    for def in sys.all_bodies() {
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
        let th = &sys.roles[&def.class].theory;
        let mut conforming = 0;
        let mut failures = Vec::new();
        for k in 0..samples {
            let mut store = random_store(sys, budget, &mut rng);
            let env = env_for(th, budget, &mut rng);
            let policy = Policy {
                seed: rng.random(),
                perm_samples: 0,
                while_cap,
                check_contracts: true,
            };
            let mut engine = Engine::new(sys, policy, env.clone()).quiet();
            let mut last: Option<(Target, Vec<Value>)> = None;
            for round in 0..2 {
                let chosen = match last.take() {
                    Some((Target::Existing(id), args)) => {
                        let role = &sys.roles[&def.class];
                        let c = role.method(&def.name).expect("bound body has a contract");
                        let b = bindings(c, id, &role.sort, &args, None);
                        eval_requires(th, c, &store, &b, &env)
                            .unwrap_or(false)
                            .then_some((Target::Existing(id), args))
                    }
                    _ => pick(sys, def, &store, budget, &env, &mut rng),
                };
                let Some((target, args)) = chosen else { break };
                conforming += 1;
                if let Err(m) = run(&mut engine, def, &mut store, &target, &args, round) {
                    let which = if round == 0 { "" } else { ", replayed" };
                    failures.push(format!("sample {k}{which}: {m}"));
                    break;
                }
                last = Some((target, args));
            }
        }
        let verdict = if !failures.is_empty() {
            "fail"
        } else if conforming == 0 {
            "vacuous"
        } else {
            "pass"
        };
        out.push(RedundancyResult {
            class: def.class.clone(),
            method: def.name.clone(),
            samples,
            conforming,
            verdict,
            failures,
        });
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct IndependenceResult {
    pub class: String,
    pub method: String,
    pub stores: usize,
    pub permutations: usize,
    /// Stores on which the method ran to completion.
    pub checked: usize,
    pub verdict: &'static str,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

/// Replays each body containing an independent composition under random component orders.
///
/// Contracts are not checked here, so a body that breaks its frame still shows its divergence.
pub fn check_independence(sys: &System, budget: &Budget, stores: usize, permutations: usize, while_cap: usize) -> Vec<IndependenceResult> {
    let mut out = Vec::new();
    for def in sys.all_bodies().filter(|d| d.body.has_indep()) {
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
        let th = &sys.roles[&def.class].theory;
        let mut checked = 0;
        let mut failures = Vec::new();
        for k in 0..stores {
            let mut store = random_store(sys, budget, &mut rng);
            let env = env_for(th, budget, &mut rng);
            let Some((target, args)) = pick(sys, def, &store, budget, &env, &mut rng) else { continue };
            let policy = Policy {
                seed: rng.random(),
                perm_samples: permutations,
                while_cap,
                check_contracts: false,
            };
            let mut engine = Engine::new(sys, policy, env).quiet();
            let r = match &target {
                Target::Existing(id) => engine.call(&mut store, *id, &def.name, args).map(|_| ()),
                Target::Fresh(v) => engine.construct(&mut store, &def.class, "new", v.clone(), args).map(|_| ()),
            };
            match r {
                Ok(()) => checked += 1,
                Err(v) if v.kind == ViolationKind::Divergence => failures.push(format!("store {k}: {}", v.message)),
                Err(_) => {}
            }
        }
        let verdict = if !failures.is_empty() {
            "fail"
        } else if checked == 0 {
            "vacuous"
        } else {
            "pass"
        };
        out.push(IndependenceResult {
            class: def.class.clone(),
            method: def.name.clone(),
            stores,
            permutations,
            checked,
            verdict,
            failures,
        });
    }
    out
}
