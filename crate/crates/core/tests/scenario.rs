use std::path::PathBuf;

use tierspec::engine::{Policy, System, ViolationKind};
use tierspec::project::{LoadOptions, Project};
use tierspec::scenario::{run_scenario, Scenario, ScenarioError, Status};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn system() -> System {
    let p = Project::load(&[root().join("worldclock")], &LoadOptions::default()).unwrap();
    let (sys, errors) = System::bind(&p);
    assert!(errors.is_empty(), "{errors:?}");
    sys
}

#[test]
fn worldclock_scenario_runs_clean() {
    let sys = system();
    let sc = Scenario::load(&root().join("scenarios/worldclock.scenario")).unwrap();
    let run = run_scenario(&sys, &sc, Policy::default()).unwrap();
    assert_eq!(run.status, Status::Ok);
    let begins = |m: &str| run.trace.iter().filter(|e| e.kind == "begin" && e.method.as_deref() == Some(m)).count();
    assert_eq!(begins("SetSecond"), 1);
    assert_eq!(begins("SetZonalClocks"), 1);
    assert_eq!(begins("UpdateZonalClock"), 2);
    // Both zonals start consistent with 10:00:00, so both need updating after the tick.
    assert_eq!(begins("GetTime"), 2);
    assert_eq!(begins("SetZonalTime"), 2);
}

#[test]
fn same_seed_gives_identical_traces() {
    let sys = system();
    let sc = Scenario::load(&root().join("scenarios/worldclock.scenario")).unwrap();
    let a = run_scenario(&sys, &sc, Policy::default()).unwrap();
    let b = run_scenario(&sys, &sc, Policy::default()).unwrap();
    assert_eq!(a.trace, b.trace);
}

#[test]
fn unknown_object_is_a_reference_error() {
    let sys = system();
    let sc = Scenario::parse("[[script]]\ncall = \"q.SetChange()\"\n").unwrap();
    let err = run_scenario(&sys, &sc, Policy::default()).unwrap_err();
    assert!(matches!(err, ScenarioError::Reference { .. }), "{err}");
}

#[test]
fn detach_requires_attachment() {
    let sys = system();
    let sc = Scenario::parse(
        r#"
[[setup]]
object = "m"
sort = "MasterClock"
value = "[1, 2, 3]"
[[setup]]
object = "z"
sort = "ZonalClock"
value = '["UTC", 0, [1, 2, 3]]'
[[script]]
call = "m.Detach(z)"
"#,
    )
    .unwrap();
    let run = run_scenario(&sys, &sc, Policy::default()).unwrap();
    match run.status {
        Status::Violation(v) => assert_eq!(v.kind, ViolationKind::Requires),
        s => panic!("{s:?}"),
    }
}

#[test]
fn empty_script_traces_setup_only() {
    let sys = system();
    let sc = Scenario::parse("[[setup]]\nobject = \"m\"\nsort = \"MasterClock\"\nvalue = \"[0, 0, 0]\"\n").unwrap();
    let run = run_scenario(&sys, &sc, Policy::default()).unwrap();
    assert_eq!(run.status, Status::Ok);
    assert_eq!(run.trace.len(), 1);
    assert_eq!(run.trace[0].kind, "create");
}
