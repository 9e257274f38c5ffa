use std::collections::BTreeMap;
use std::path::PathBuf;

use tierspec::engine::{
    check_independence, check_layering, check_redundancy, derive_contract, Engine, Policy, System, ViolationKind,
};
use tierspec::kernel::{Budget, Value};
use tierspec::project::{LoadOptions, Project};
use tierspec::roles::Category;
use tierspec::syntax::ast::UnitKind;
use tierspec::{Sort, Store};

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/worldclock")
}

fn project() -> Project {
    Project::load(&[corpus()], &LoadOptions::default()).unwrap()
}

fn system() -> System {
    let (sys, errors) = System::bind(&project());
    assert!(errors.is_empty(), "{errors:?}");
    sys
}

fn time(h: i64, m: i64, s: i64) -> Value {
    Value::Tuple(Sort::simple("Time"), vec![Value::Int(h), Value::Int(m), Value::Int(s)])
}

fn zone(name: &str, offset: i64, t: Value) -> Value {
    Value::Tuple(Sort::simple("Zone"), vec![Value::Str(name.into()), Value::Int(offset), t])
}

fn env() -> BTreeMap<String, Value> {
    BTreeMap::from([("currentTime".to_string(), time(10, 0, 0))])
}

#[test]
fn categories_of_the_clock_roles() {
    let sys = system();
    let cats = |role: &str| -> BTreeMap<String, Category> {
        sys.role(role)
            .unwrap()
            .categories()
            .into_iter()
            .map(|(m, c)| (m, c.unwrap()))
            .collect()
    };
    let master = cats("MasterClock");
    for m in ["Attach", "Detach", "SetSecond"] {
        assert_eq!(master[m], Category::O, "{m}");
    }
    for m in ["SetZonalClocks", "SetChange"] {
        assert_eq!(master[m], Category::OE, "{m}");
    }
    assert_eq!(master["GetTime"], Category::V);
    let zonal = cats("ZonalClock");
    assert_eq!(zonal["ZonalClock"], Category::OE);
    assert_eq!(zonal["UpdateZonalClock"], Category::O);
    assert_eq!(zonal["SetZonalTime"], Category::O);
}

#[test]
fn set_change_updates_master_and_zonals() {
    let sys = system();
    let mut store = Store::new();
    let m = store.alloc(Sort::simple("MasterClock"), "m", time(10, 0, 0));
    let mut engine = Engine::new(&sys, Policy::default(), env());
    let arg = vec![Value::Obj(m, Sort::simple("MasterClock"))];
    let z1 = engine
        .construct(&mut store, "ZonalClock", "z1", zone("CET", 3600, time(0, 0, 0)), arg.clone())
        .unwrap();
    let z2 = engine
        .construct(&mut store, "ZonalClock", "z2", zone("EST", -18000, time(0, 0, 0)), arg)
        .unwrap();
    engine.call(&mut store, m, "SetChange", vec![]).unwrap();
    assert_eq!(store.value(m), Some(&time(10, 0, 1)));
    assert_eq!(store.value(z1), Some(&zone("CET", 3600, time(11, 0, 1))));
    assert_eq!(store.value(z2), Some(&zone("EST", -18000, time(5, 0, 1))));

    let trace = engine.take_trace();
    let begins = trace.iter().filter(|e| e.kind == "begin").count();
    let ends = trace.iter().filter(|e| e.kind == "end").count();
    assert_eq!(begins, ends);
    let last = trace.last().unwrap();
    assert_eq!((last.kind, last.method.as_deref(), last.depth), ("end", Some("SetChange"), 0));
    assert!(last.verdicts.as_ref().unwrap().values().all(|v| v == "ok"));
    assert!(trace.iter().any(|e| e.kind == "permutation"));
}

#[test]
fn detaching_an_unattached_clock_violates_requires() {
    let sys = system();
    let mut store = Store::new();
    let m = store.alloc(Sort::simple("MasterClock"), "m", time(1, 2, 3));
    let z = store.alloc(Sort::simple("ZonalClock"), "z", zone("UTC", 0, time(1, 2, 3)));
    let before = store.clone();
    let mut engine = Engine::new(&sys, Policy::default(), env());
    let err = engine
        .call(&mut store, m, "Detach", vec![Value::Obj(z, Sort::simple("ZonalClock"))])
        .unwrap_err();
    assert_eq!(err.kind, ViolationKind::Requires);
    assert!(err.is_caller_error());
    assert_eq!(store, before);
    assert!(engine.trace().iter().any(|e| e.kind == "violation"));
}

#[test]
fn bodies_conform_and_independence_holds() {
    let sys = system();
    let budget = Budget::default();
    for r in check_redundancy(&sys, &budget, 20, 10_000) {
        assert_eq!(r.verdict, "pass", "{r:?}");
    }
    let ind = check_independence(&sys, &budget, 10, 5, 10_000);
    assert_eq!(ind.len(), 1);
    assert_eq!(ind[0].verdict, "pass", "{:?}", ind[0]);
}

#[test]
fn corpus_respects_layering() {
    assert!(check_layering(&project()).is_empty());
}

#[test]
fn upward_reference_from_a_trait_is_reported() {
    let mut p = project();
    let mut errors = Vec::new();
    let src = "Up : trait\n  includes Time\n  introduces\n    SetSecond : Time -> Time\n  asserts\n    forall t : Time\n      SetSecond(t) = t;\n";
    p.add_text(src, "Up.trait".as_ref(), UnitKind::Trait, false, &mut errors);
    assert!(errors.is_empty());
    // Introducing the name makes it a trait symbol; only undeclared uses are upward.
    assert!(check_layering(&p).is_empty());

    let src = "Up : trait\n  includes WorldClock\n  asserts\n    forall m : MasterClock\n      SetSecond(m) = m;\n";
    p.add_text(src, "Up.trait".as_ref(), UnitKind::Trait, false, &mut errors);
    let diags = check_layering(&p);
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert!(diags[0].message.starts_with("layering violation"));
}

#[test]
fn derived_contract_of_set_change() {
    let sys = system();
    let body = sys.body("MasterClock", "SetChange").unwrap();
    let d = derive_contract(&sys, "MasterClock", &body.params, &body.source).unwrap();
    assert_eq!(d.node, "seq");
    assert_eq!(d.children.len(), 2);
    assert!(d.post.contains("succ"), "{}", d.post);
    assert!(d.post.contains("isConsistent"), "{}", d.post);
}
