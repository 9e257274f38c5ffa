use std::path::PathBuf;

use tierspec::kernel::{check_obligations, flatten, Budget, ObligationResult, Verdict};
use tierspec::project::{LoadOptions, Originals, Project};

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/worldclock")
}

fn run(name: &str, originals: Originals) -> Vec<ObligationResult> {
    let opts = LoadOptions { lib: None, originals };
    let p = Project::load(&[corpus()], &opts).unwrap();
    let th = flatten(name, &p.traits()).unwrap();
    check_obligations(&th, &Budget::default())
}

fn find<'a>(rs: &'a [ObligationResult], text: &str) -> &'a ObligationResult {
    rs.iter()
        .find(|r| r.text.contains(text))
        .unwrap_or_else(|| panic!("no obligation `{text}` in {rs:#?}"))
}

#[test]
fn succ_pred_holds_on_grid_and_random_values() {
    let rs = run("Time", Originals::None);
    let r = find(&rs, "succ(pred(t))");
    assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
    assert_eq!(r.kind, "implies");
    assert_eq!(r.cases, 27 + 1000);
}

#[test]
fn corrected_time_trait_has_no_failures() {
    let rs = run("Time", Originals::None);
    for r in &rs {
        assert!(matches!(r.verdict, Verdict::Pass | Verdict::Assumed | Verdict::Deferred), "{r:?}");
    }
    let part = rs.iter().find(|r| r.kind == "partition").unwrap();
    assert_eq!(part.verdict, Verdict::Pass);
    assert!(part.cases > 0);
}

#[test]
fn original_validity_axiom_fails_at_midnight() {
    let rs = run("Time", Originals::Tags(vec!["valid-positive".into()]));
    let r = find(&rs, "toInt(t) > 0");
    assert_eq!(r.verdict, Verdict::Fail);
    let ce = r.counterexample.as_ref().unwrap();
    assert_eq!(ce["t"], "[0, 0, 0]");
}

#[test]
fn original_second_range_makes_current_time_invalid() {
    let rs = run("Time", Originals::Tags(vec!["second-range".into()]));
    let r = find(&rs, "isValid(currentTime)");
    assert_eq!(r.verdict, Verdict::Fail);
    assert!(r.counterexample.as_ref().unwrap().contains_key("currentTime"));
}

#[test]
fn mutated_successor_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let src = std::fs::read_to_string(corpus().join("Time.trait"))
        .unwrap()
        .replace("succ(t) == fromInt(toInt(t) + 1)", "succ(t) == fromInt(toInt(t) + 2)");
    std::fs::write(dir.path().join("Time.trait"), src).unwrap();
    let p = Project::load(&[dir.path().to_path_buf()], &LoadOptions::default()).unwrap();
    let th = flatten("Time", &p.traits()).unwrap();
    let rs = check_obligations(&th, &Budget::default());
    let r = find(&rs, "succ(pred(t))");
    assert_eq!(r.verdict, Verdict::Fail);
    assert!(r.counterexample.is_some());
}

#[test]
fn zone_state_axioms_are_deferred_or_pass() {
    for name in ["Zone", "WorldClock"] {
        for r in run(name, Originals::None) {
            assert_ne!(r.verdict, Verdict::Fail, "{name}: {r:?}");
            assert_ne!(r.verdict, Verdict::Error, "{name}: {r:?}");
        }
    }
}

#[test]
fn grid_override_parses() {
    let mut b = Budget::default();
    b.set_grid("Time.hour=0,12").unwrap();
    assert_eq!(b.grids["Time.hour"].len(), 2);
    assert!(b.set_grid("nonsense").is_err());
}
