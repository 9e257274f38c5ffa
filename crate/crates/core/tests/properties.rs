//! Invariants of the kernel and the execution engine, checked on generated inputs.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tierspec::engine::{random_store, Engine, Policy, System};
use tierspec::kernel::{flatten, normalize, Budget, Normal, Theory, Value};
use tierspec::project::{LoadOptions, Project};
use tierspec::syntax::parse_term;
use tierspec::{ObjId, Sort, Store};

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/worldclock")
}

fn project() -> &'static Project {
    static P: OnceLock<Project> = OnceLock::new();
    P.get_or_init(|| Project::load(&[corpus()], &LoadOptions::default()).unwrap())
}

fn time_theory() -> &'static Theory {
    static T: OnceLock<Theory> = OnceLock::new();
    T.get_or_init(|| flatten("Time", &project().traits()).unwrap())
}

fn system() -> &'static System {
    static S: OnceLock<System> = OnceLock::new();
    S.get_or_init(|| {
        let (sys, errors) = System::bind(project());
        assert!(errors.is_empty(), "{errors:?}");
        sys
    })
}

fn norm(src: &str) -> Normal {
    normalize(time_theory(), &parse_term(src).unwrap(), &BTreeMap::new()).unwrap()
}

fn secs(v: &Value) -> i64 {
    match v {
        Value::Tuple(_, f) => match (&f[0], &f[1], &f[2]) {
            (Value::Int(h), Value::Int(m), Value::Int(s)) => 3600 * h + 60 * m + s,
            _ => panic!("not a time: {v}"),
        },
        _ => panic!("not a time: {v}"),
    }
}

fn zone_parts(v: &Value) -> (i64, i64) {
    match v {
        Value::Tuple(_, f) => match (&f[1], &f[2]) {
            (Value::Int(off), t) => (*off, secs(t)),
            _ => panic!("not a zone: {v}"),
        },
        _ => panic!("not a zone: {v}"),
    }
}

/// Every attached zonal shows its master's time shifted by its offset, wrapped at midnight.
fn consistent(store: &Store) -> bool {
    let master_sort = Sort::simple("MasterClock");
    store.objects_of(&master_sort).into_iter().all(|m| {
        let t = secs(store.value(m).unwrap());
        store.related("zonalClocksOf", m).into_iter().all(|z| {
            let (off, zt) = zone_parts(store.value(z).unwrap());
            zt == (t + off).rem_euclid(86_400)
        })
    })
}

fn env() -> BTreeMap<String, Value> {
    BTreeMap::from([(
        "currentTime".to_string(),
        Value::Tuple(Sort::simple("Time"), vec![Value::Int(0), Value::Int(0), Value::Int(0)]),
    )])
}

fn store_for(seed: u64) -> Store {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_store(system(), &Budget::default(), &mut rng)
}

/// Makes every attached zonal consistent by direct arithmetic.
fn synchronize(store: &mut Store) {
    for m in store.objects_of(&Sort::simple("MasterClock")) {
        let t = secs(store.value(m).unwrap());
        for z in store.related("zonalClocksOf", m) {
            let Value::Tuple(s, mut f) = store.value(z).unwrap().clone() else { unreachable!() };
            let (off, _) = zone_parts(&Value::Tuple(s.clone(), f.clone()));
            let zt = (t + off).rem_euclid(86_400);
            f[2] = Value::Tuple(
                Sort::simple("Time"),
                vec![Value::Int(zt / 3600), Value::Int(zt / 60 % 60), Value::Int(zt % 60)],
            );
            store.set_value(z, Value::Tuple(s, f));
        }
    }
}

fn masters(store: &Store) -> Vec<ObjId> {
    store.objects_of(&Sort::simple("MasterClock"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn to_int_of_from_int_wraps(i in -200_000i64..200_000) {
        prop_assert_eq!(norm(&format!("toInt(fromInt({i}))")), Normal::Value(Value::Int(i.rem_euclid(86_400))));
    }

    #[test]
    fn succ_adds_one_second(h in 0i64..24, m in 0i64..60, s in 0i64..60) {
        let Normal::Value(v) = norm(&format!("succ([{h}, {m}, {s}]:Time)")) else { panic!("stuck") };
        prop_assert_eq!(secs(&v), (3600 * h + 60 * m + s + 1) % 86_400);
    }

    #[test]
    fn set_change_preserves_consistency(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let mut store = store_for(seed);
        synchronize(&mut store);
        prop_assume!(consistent(&store));
        let ms = masters(&store);
        let m = ms[pick.index(ms.len())];
        let before = secs(store.value(m).unwrap());
        let mut engine = Engine::new(system(), Policy { seed, ..Policy::default() }, env()).quiet();
        engine.call(&mut store, m, "SetChange", vec![]).unwrap();
        prop_assert_eq!(secs(store.value(m).unwrap()), (before + 1) % 86_400);
        // Masters other than m still hold their zonals consistent.
        prop_assert!(consistent(&store));
    }

    #[test]
    fn failed_calls_leave_the_store_unchanged(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let mut store = store_for(seed);
        let zonals = store.objects_of(&Sort::simple("ZonalClock"));
        prop_assume!(!zonals.is_empty());
        let z = zonals[pick.index(zonals.len())];
        let m = masters(&store)[0];
        let before = store.clone();
        let mut engine = Engine::new(system(), Policy::default(), env()).quiet();
        let arg = Value::Obj(z, Sort::simple("ZonalClock"));
        match engine.call(&mut store, m, "Detach", vec![arg.clone()]) {
            Ok(_) => prop_assert!(!store.related("zonalClocksOf", m).contains(&z)),
            Err(v) => {
                prop_assert!(v.is_caller_error());
                prop_assert_eq!(&store, &before);
            }
        }
    }

    #[test]
    fn same_seed_same_trace(seed in any::<u64>()) {
        let base = store_for(seed);
        let m = masters(&base)[0];
        let run = || {
            let mut store = base.clone();
            let mut engine = Engine::new(system(), Policy { seed, ..Policy::default() }, env());
            let r = engine.call(&mut store, m, "SetChange", vec![]);
            (r.is_ok(), engine.take_trace(), store)
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(a.0, b.0);
        prop_assert_eq!(a.1, b.1);
        prop_assert_eq!(a.2, b.2);
    }

    #[test]
    fn zonal_updates_are_independent(seed in any::<u64>()) {
        let mut store = store_for(seed);
        let m = masters(&store)[0];
        let policy = Policy { seed, perm_samples: 5, check_contracts: false, ..Policy::default() };
        let mut engine = Engine::new(system(), policy, env()).quiet();
        prop_assert!(engine.call(&mut store, m, "SetZonalClocks", vec![]).is_ok());
    }
}
