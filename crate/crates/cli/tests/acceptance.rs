//! End-to-end acceptance checks against the `tierspec` binary and the shipped corpus.
//!
//! Prints one PASS/FAIL line per criterion, then fails if any criterion failed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::Value as Json;

const OBLIGATION_LIMIT: Duration = Duration::from_secs(5);
const SIMULATION_LIMIT: Duration = Duration::from_secs(2);
const SAMPLING_LIMIT: Duration = Duration::from_secs(10);

/// Default grid for Time: three boundary values per field.
const TIME_GRID: usize = 3 * 3 * 3;
const RANDOM_CASES: usize = 1000;

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
    elapsed: Duration,
}

impl Output {
    fn json(&self) -> Vec<Json> {
        self.stdout
            .lines()
            .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("bad JSON line {l:?}: {e}")))
            .collect()
    }
}

fn tierspec(args: &[&str]) -> Output {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_tierspec"))
        .args(args)
        .current_dir(corpus())
        .env_remove("TIERSPEC_LIB")
        .output()
        .expect("run tierspec");
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        elapsed: start.elapsed(),
    }
}

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(o: &Output, limit: Duration) -> Result<(), String> {
    ensure(o.elapsed < limit, || format!("took {:?}, limit {limit:?}", o.elapsed))
}

fn reports<'a>(lines: &'a [Json], kind: &str) -> Vec<&'a Json> {
    lines.iter().filter(|l| l["report"] == kind).collect()
}

fn obligation<'a>(lines: &'a [Json], text: &str) -> Option<&'a Json> {
    reports(lines, "obligation").into_iter().map(|r| &r["result"]).find(|r| r["text"] == text)
}

fn begins(trace: &[Json], method: &str) -> usize {
    trace.iter().filter(|e| e["kind"] == "begin" && e["method"] == method).count()
}

fn obligations_discharge() -> Outcome {
    let o = tierspec(&["test", "worldclock"]);
    ensure(o.code == 0, || format!("exit {}: {}", o.code, o.stderr))?;
    within(&o, OBLIGATION_LIMIT)?;
    let lines = o.json();
    for text in ["succ(pred(t)) == t", "isUpToDate(t, update(t, z))"] {
        let r = obligation(&lines, text).ok_or(format!("no obligation `{text}`"))?;
        ensure(r["verdict"] == "pass", || format!("`{text}`: {r}"))?;
        let cases = r["cases"].as_u64().unwrap_or(0) as usize;
        ensure(cases >= TIME_GRID + RANDOM_CASES, || format!("`{text}` ran {cases} cases"))?;
    }
    let succ = obligation(&lines, "succ(pred(t)) == t").unwrap();
    ensure(succ["cases"] == TIME_GRID + RANDOM_CASES, || format!("succ/pred cases {}", succ["cases"]))?;
    let summary = reports(&lines, "summary");
    ensure(summary.len() == 1 && summary[0]["failed"] == 0, || format!("{summary:?}"))?;
    Ok(format!("2 implications pass over {} cases each, {:?}", TIME_GRID + RANDOM_CASES, o.elapsed))
}

fn typo_sensitivity() -> Outcome {
    let broken = tierspec(&["test", "worldclock", "--original-axioms"]);
    within(&broken, OBLIGATION_LIMIT)?;
    ensure(broken.code == 1, || format!("exit {} with the original axioms", broken.code))?;
    let lines = broken.json();
    let failed: Vec<&Json> = reports(&lines, "obligation")
        .into_iter()
        .map(|r| &r["result"])
        .filter(|r| r["verdict"] == "fail" && r["text"].as_str().is_some_and(|t| t.contains("isValid")))
        .collect();
    ensure(!failed.is_empty(), || "no isValid obligation failed".into())?;
    let time_value = |v: &Json| {
        v.as_str().is_some_and(|s| {
            let parts: Vec<&str> = s.trim_matches(|c| c == '[' || c == ']').split(", ").collect();
            parts.len() == 3 && parts.iter().all(|p| p.parse::<i64>().is_ok())
        })
    };
    let ce = failed
        .iter()
        .filter_map(|r| r["counterexample"].as_object())
        .flat_map(|m| m.values())
        .find(|v| time_value(v))
        .ok_or("no concrete Time counterexample")?
        .clone();

    let fixed = tierspec(&["test", "worldclock"]);
    within(&fixed, OBLIGATION_LIMIT)?;
    let lines = fixed.json();
    let still: Vec<&Json> = reports(&lines, "obligation")
        .into_iter()
        .map(|r| &r["result"])
        .filter(|r| r["text"].as_str().is_some_and(|t| t.contains("isValid")) && r["verdict"] != "pass")
        .collect();
    ensure(fixed.code == 0 && still.is_empty(), || format!("fixed axioms still fail: {still:?}"))?;
    Ok(format!("{} isValid obligations fail, e.g. counterexample {ce}; fixed axioms pass", failed.len()))
}

/// Seconds since midnight, wrapped, rendered as `[h, m, s]`.
fn clock(secs: i64) -> String {
    let s = secs.rem_euclid(86_400);
    format!("[{}, {}, {}]", s / 3600, s / 60 % 60, s % 60)
}

fn end_to_end_consistency() -> Outcome {
    let o = tierspec(&["simulate", "worldclock", "--scenario", "scenarios/consistency.scenario"]);
    ensure(o.code == 0, || format!("exit {}: {}", o.code, o.stderr))?;
    within(&o, SIMULATION_LIMIT)?;
    let trace = o.json();
    let checks: Vec<&Json> = trace.iter().filter(|e| e["kind"] == "check").collect();
    ensure(checks.len() == 6, || format!("{} checks", checks.len()))?;
    ensure(checks.iter().all(|c| c["result"] == "true"), || format!("{checks:?}"))?;
    ensure(begins(&trace, "SetChange") == 5, || "expected 5 SetChange calls".into())?;

    // Independent arithmetic: the master ticks five times from 10:00:00.
    let master = 10 * 3600 + 5;
    let last_time: BTreeMap<String, String> = trace
        .iter()
        .filter(|e| e["kind"] == "end" && e["method"] == "SetZonalTime")
        .map(|e| (e["receiver"].as_str().unwrap().to_string(), e["args"][0].as_str().unwrap().to_string()))
        .collect();
    for z in ["z1", "z2", "z3"] {
        ensure(last_time.get(z).map(String::as_str) == Some(&*master.to_string()), || {
            format!("{z} last set from {:?}, expected {master}", last_time.get(z))
        })?;
    }
    let final_check = checks.last().unwrap();
    ensure(final_check["method"] == format!("master reads {}", "10:00:05"), || format!("{final_check}"))?;
    ensure(clock(master) == "[10, 0, 5]", || "clock arithmetic".into())?;
    Ok(format!("5 ticks, 3 zonals consistent after each, master {}, {:?}", clock(master), o.elapsed))
}

fn write_scenario(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn trace_shape() -> Outcome {
    let o = tierspec(&["simulate", "worldclock", "--scenario", "scenarios/worldclock.scenario"]);
    ensure(o.code == 0, || format!("exit {}: {}", o.code, o.stderr))?;
    within(&o, SIMULATION_LIMIT)?;
    let shape = |trace: &[Json]| -> Result<(usize, usize), String> {
        let start = trace
            .iter()
            .position(|e| e["kind"] == "begin" && e["method"] == "SetChange")
            .ok_or("no SetChange")?;
        let t = &trace[start..];
        let counts = [
            ("SetSecond", begins(t, "SetSecond")),
            ("SetZonalClocks", begins(t, "SetZonalClocks")),
            ("UpdateZonalClock", begins(t, "UpdateZonalClock")),
        ];
        ensure(counts == [("SetSecond", 1), ("SetZonalClocks", 1), ("UpdateZonalClock", 2)], || {
            format!("{counts:?}")
        })?;
        let inconsistent = t.iter().filter(|e| e["kind"] == "guard" && e["result"] == "true").count();
        let (get, set) = (begins(t, "GetTime"), begins(t, "SetZonalTime"));
        ensure(get == inconsistent && set == inconsistent && get <= 2, || {
            format!("GetTime {get}, SetZonalTime {set}, inconsistent {inconsistent}")
        })?;
        Ok((get, set))
    };
    let (both, _) = shape(&o.json())?;
    ensure(both == 2, || format!("expected both zonals updated, got {both}"))?;

    // z1 already shows the time after the tick, so only z2 needs an update.
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(corpus().join("scenarios/worldclock.scenario"))
        .unwrap()
        .replace(r#"["CET", 3600, [11, 0, 0]]"#, r#"["CET", 3600, [11, 0, 1]]"#)
        .split("[[script]]")
        .take(2)
        .collect::<Vec<_>>()
        .join("[[script]]");
    let path = write_scenario(&dir, "one_stale.scenario", &text);
    let o = tierspec(&["simulate", "worldclock", "--scenario", &path]);
    ensure(o.code == 0, || format!("exit {}: {}", o.code, o.stderr))?;
    let (one, _) = shape(&o.json())?;
    ensure(one == 1, || format!("expected one update, got {one}"))?;
    Ok("SetSecond x1, SetZonalClocks x1, UpdateZonalClock x2, GetTime = SetZonalTime = stale zonals (2, and 1)".into())
}

fn categorization() -> Outcome {
    let o = tierspec(&["categorize", "worldclock"]);
    ensure(o.code == 0, || format!("exit {}: {}", o.code, o.stderr))?;
    let master: Vec<(String, Vec<String>)> = o
        .json()
        .into_iter()
        .filter(|l| l["role"] == "MasterClock")
        .map(|l| {
            let ms = l["methods"].as_array().unwrap().iter().map(|m| m.as_str().unwrap().to_string()).collect();
            (l["category"].as_str().unwrap().to_string(), ms)
        })
        .collect();
    let expected: Vec<(String, Vec<String>)> = [
        ("O", vec!["Attach", "Detach", "SetSecond"]),
        ("O-E", vec!["SetZonalClocks", "SetChange"]),
        ("V", vec!["GetTime"]),
    ]
    .into_iter()
    .map(|(c, ms)| (c.to_string(), ms.into_iter().map(String::from).collect()))
    .collect();
    ensure(master == expected, || format!("{master:?}"))?;
    Ok("MasterClock O: Attach, Detach, SetSecond; O-E: SetZonalClocks, SetChange; V: GetTime".into())
}

fn frame_enforcement() -> Outcome {
    let o = tierspec(&[
        "simulate",
        "worldclock",
        "mutants/frame_setsecond.role",
        "--scenario",
        "scenarios/frame_mutant.scenario",
    ]);
    ensure(o.code == 2, || format!("exit {}", o.code))?;
    let trace = o.json();
    let v = trace
        .iter()
        .find(|e| e["kind"] == "violation")
        .ok_or("no violation event")?;
    ensure(v["verdicts"]["kind"] == "frame", || format!("{v}"))?;
    let detail = v["detail"].as_str().unwrap_or("");
    ensure(detail.starts_with("z1 changed"), || detail.to_string())?;
    Ok(format!("exit 2, {detail}"))
}

fn independence(lines: &[Json]) -> Option<&Json> {
    reports(lines, "independence")
        .into_iter()
        .map(|r| &r["result"])
        .find(|r| r["method"] == "SetZonalClocks")
}

fn independence_check() -> Outcome {
    let o = tierspec(&["test", "worldclock", "--samples", "20", "--perm-samples", "5"]);
    within(&o, SAMPLING_LIMIT)?;
    let lines = o.json();
    let r = independence(&lines).ok_or("no independence report")?;
    ensure(r["verdict"] == "pass" && r["stores"] == 20 && r["permutations"] == 5, || format!("{r}"))?;
    ensure(r["checked"].as_u64().unwrap_or(0) > 0, || format!("{r}"))?;

    let m = tierspec(&["test", "worldclock", "mutants/update_increments_master.inter"]);
    within(&m, SAMPLING_LIMIT)?;
    let lines = m.json();
    let r = independence(&lines).ok_or("no independence report for the mutant")?;
    ensure(r["verdict"] == "fail" && m.code == 1, || format!("mutant not flagged: {r}"))?;
    Ok(format!("20 stores x 5 orders identical; mutant diverges on {} store(s)", r["failures"].as_array().map_or(0, Vec::len)))
}

fn redundancy_check() -> Outcome {
    let o = tierspec(&["test", "worldclock", "--samples", "20"]);
    within(&o, SAMPLING_LIMIT)?;
    let lines = o.json();
    let verdicts: BTreeMap<String, String> = reports(&lines, "redundancy")
        .into_iter()
        .map(|r| &r["result"])
        .map(|r| (r["method"].as_str().unwrap().to_string(), r["verdict"].as_str().unwrap().to_string()))
        .collect();
    for m in ["SetChange", "SetZonalClocks", "UpdateZonalClock", "ZonalClock"] {
        ensure(verdicts.get(m).map(String::as_str) == Some("pass"), || format!("{m}: {:?}", verdicts.get(m)))?;
    }
    let m = tierspec(&["test", "worldclock", "mutants/swapped_setchange.inter"]);
    within(&m, SAMPLING_LIMIT)?;
    let lines = m.json();
    let set_change = reports(&lines, "redundancy")
        .into_iter()
        .map(|r| &r["result"])
        .find(|r| r["method"] == "SetChange")
        .ok_or("no SetChange report for the mutant")?;
    ensure(set_change["verdict"] == "fail" && m.code == 1, || format!("{set_change}"))?;
    Ok("4 bodies conform over 20 stores; swapped SetChange fails".into())
}

fn layering() -> Outcome {
    let ok = tierspec(&["check", "worldclock"]);
    ensure(ok.code == 0 && !ok.stderr.contains("layering"), || ok.stderr.clone())?;
    for (m, who) in [("mutants/trait_upcall.trait", "trait Ticking"), ("mutants/role_upcall.role", "role MasterClock")] {
        let o = tierspec(&["check", "worldclock", m]);
        ensure(o.code == 1, || format!("{m}: exit {}", o.code))?;
        ensure(o.stderr.contains(&format!("layering violation: {who}")), || o.stderr.clone())?;
    }
    Ok("corpus clean; trait->role and role->interaction mutants rejected".into())
}

/// A trace with the sampled fields of permutation and choice events blanked.
fn without_sampling(trace: &str) -> Vec<Json> {
    trace
        .lines()
        .map(|l| {
            let mut e: Json = serde_json::from_str(l).unwrap();
            if e["kind"] == "permutation" || e["kind"] == "choice" {
                e["seed"] = Json::Null;
                e["detail"] = Json::Null;
            }
            e
        })
        .collect()
}

fn determinism() -> Outcome {
    let args = |seed: &'static str| ["simulate", "worldclock", "--scenario", "scenarios/consistency.scenario", "--seed", seed];
    let a = tierspec(&args("42"));
    let b = tierspec(&args("42"));
    ensure(a.code == 0 && b.code == 0, || "runs failed".into())?;
    ensure(a.stdout == b.stdout, || "seed 42 traces differ".into())?;
    let c = tierspec(&args("7"));
    ensure(c.code == a.code, || format!("exit {} vs {}", c.code, a.code))?;
    ensure(c.stdout != a.stdout, || "seed had no effect on sampled orders".into())?;
    ensure(without_sampling(&a.stdout) == without_sampling(&c.stdout), || {
        "seeds 42 and 7 differ outside permutation/choice fields".into()
    })?;
    Ok(format!("{} bytes identical under seed 42; seed 7 differs only in sampled orders", a.stdout.len()))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        ("obligation discharge", obligations_discharge),
        ("typo sensitivity", typo_sensitivity),
        ("end-to-end consistency", end_to_end_consistency),
        ("trace shape", trace_shape),
        ("categorization", categorization),
        ("frame enforcement", frame_enforcement),
        ("independence", independence_check),
        ("checkable redundancy", redundancy_check),
        ("layering", layering),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    let mut stdout = std::io::stdout();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        let line = match f() {
            Ok(msg) => format!("criterion {n:>2} PASS {name}: {msg}"),
            Err(msg) => {
                failed.push(n);
                format!("criterion {n:>2} FAIL {name}: {msg}")
            }
        };
        // Written past the test harness's capture so the summary always shows.
        let _ = writeln!(stdout, "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
