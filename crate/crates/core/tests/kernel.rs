use std::collections::BTreeMap;
use std::path::PathBuf;

use tierspec::kernel::{flatten, normalize, sort_of, Interp, Normal, Scope, Theory, Value};
use tierspec::project::{LoadOptions, Project};
use tierspec::syntax::parse_term;
use tierspec::Sort;

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/worldclock")
}

fn theory(name: &str) -> Theory {
    let p = Project::load(&[corpus()], &LoadOptions::default()).unwrap();
    flatten(name, &p.traits()).unwrap()
}

fn norm(th: &Theory, src: &str) -> Normal {
    normalize(th, &parse_term(src).unwrap(), &BTreeMap::new()).unwrap()
}

fn time(h: i64, m: i64, s: i64) -> Value {
    Value::Tuple(Sort::simple("Time"), vec![Value::Int(h), Value::Int(m), Value::Int(s)])
}

#[test]
fn time_includes_total_order_and_integer() {
    let th = theory("Time");
    let t = Sort::simple("Time");
    assert!(th.find_op("<=", &[t.clone(), t.clone()]).is_some());
    assert!(th.find_op("+", &[Sort::int(), Sort::int()]).is_some());
    assert!(th.partitions.contains_key(&t));
    let cur = th.ops_named("currentTime").next().unwrap();
    assert_eq!(th.op(cur).interp, Interp::Env);
}

#[test]
fn world_clock_renames_object_sorts() {
    let th = theory("WorldClock");
    for s in ["MasterClock", "ZonalClock"] {
        assert!(th.is_object_sort(&Sort::simple(s)), "{s}");
    }
    assert!(th.has_sort(&Sort::applied("Set", vec![Sort::simple("ZonalClock")])));
    let z = th.ops_named("zonalClocksOf").next().unwrap();
    assert_eq!(th.op(z).interp, Interp::Relation);
    let m = th.ops_named("masterOf").next().unwrap();
    assert_eq!(th.op(m).interp, Interp::Inverse(z));
}

#[test]
fn to_int_matches_direct_arithmetic() {
    let th = theory("Time");
    for (h, m, s) in [(1, 2, 3), (0, 0, 0), (23, 59, 59), (10, 0, 1)] {
        let got = norm(&th, &format!("toInt([{h}, {m}, {s}]:Time)"));
        assert_eq!(got, Normal::Value(Value::Int(3600 * h + 60 * m + s)));
    }
}

#[test]
fn from_int_inverts_to_int() {
    let th = theory("Time");
    assert_eq!(norm(&th, "fromInt(toInt([5, 4, 3]:Time))"), Normal::Value(time(5, 4, 3)));
    assert_eq!(norm(&th, "succ([23, 59, 59]:Time)"), Normal::Value(time(0, 0, 0)));
    assert_eq!(norm(&th, "pred([0, 0, 0]:Time)"), Normal::Value(time(23, 59, 59)));
}

#[test]
fn max_and_min_agree_with_brute_force() {
    let th = theory("Time");
    let grid = [0i64, 10, 20, 3599, 86399];
    for a in grid {
        for b in grid {
            let ta = format!("fromInt({a})");
            let tb = format!("fromInt({b})");
            let max = norm(&th, &format!("toInt(max({ta}, {tb}))"));
            let min = norm(&th, &format!("toInt(min({ta}, {tb}))"));
            assert_eq!(max, Normal::Value(Value::Int(a.max(b))));
            assert_eq!(min, Normal::Value(Value::Int(a.min(b))));
        }
    }
}

#[test]
fn sort_checking() {
    let th = theory("Time");
    let scope: Scope = vec![("t".into(), Sort::simple("Time"))];
    assert_eq!(sort_of(&th, &parse_term("toInt(currentTime)").unwrap(), &scope).unwrap(), Sort::int());
    assert_eq!(sort_of(&th, &parse_term("t.hour").unwrap(), &scope).unwrap(), Sort::int());
    let err = sort_of(&th, &parse_term("toInt(5)").unwrap(), &scope).unwrap_err();
    assert!(err.message.contains("sort Int, expected Time"), "{}", err.message);
}

#[test]
fn zone_update_is_up_to_date() {
    let th = theory("Zone");
    for off in [0, 3600, -18000] {
        let src = format!("isUpToDate([10, 0, 1]:Time, update([10, 0, 1]:Time, [\"Z\", {off}, [1, 2, 3]:Time]:Zone))");
        assert_eq!(norm(&th, &src), Normal::Value(Value::Bool(true)));
    }
}

#[test]
fn decided_equality_uses_partition() {
    let th = theory("Time");
    assert_eq!(norm(&th, "[0, 0, 60]:Time = [0, 1, 0]:Time"), Normal::Value(Value::Bool(true)));
    assert_eq!(norm(&th, "[0, 0, 1]:Time = [0, 1, 0]:Time"), Normal::Value(Value::Bool(false)));
}
