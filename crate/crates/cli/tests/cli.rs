use std::path::PathBuf;
use std::process::Command;

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn tierspec(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tierspec"))
        .args(args)
        .current_dir(corpus())
        .env_remove("TIERSPEC_LIB")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn unknown_operator_is_positioned() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("Bad.trait");
    std::fs::write(&f, "Bad : trait\n  includes Integer\n  asserts\n    forall i : Int\n      frobnicate(i) = i;\n").unwrap();
    let (code, _, err) = tierspec(&["check", f.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("Bad.trait:5:7") && err.contains("frobnicate"), "{err}");
}

#[test]
fn empty_role_gives_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("T.trait"), "T : trait\n  includes MutableObj(Int, Box for Obj[Int]), Integer\n").unwrap();
    std::fs::write(dir.path().join("Box.role"), "Box : role specification\nuses T;\n").unwrap();
    let (code, out, err) = tierspec(&["categorize", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.is_empty(), "{out}");
}

#[test]
fn scenario_reference_error_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("bad.scenario");
    std::fs::write(&s, "[[script]]\ncall = \"nobody.SetChange()\"\n").unwrap();
    let (code, out, err) = tierspec(&["simulate", "worldclock", "--scenario", s.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(out.is_empty());
    assert!(err.contains("unknown object `nobody`"), "{err}");
}

#[test]
fn malformed_grid_is_rejected() {
    let (code, _, err) = tierspec(&["test", "worldclock", "--grid", "Time.hour"]);
    assert_eq!(code, 1);
    assert!(err.contains("error"), "{err}");
}

#[test]
fn seed_changes_samples_but_not_verdicts() {
    let verdicts = |seed: &str| -> Vec<String> {
        let (code, out, _) = tierspec(&["test", "worldclock", "--seed", seed, "--random-count", "200"]);
        assert_eq!(code, 0);
        out.lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .filter_map(|v| v["result"]["verdict"].as_str().map(String::from))
            .collect()
    };
    assert_eq!(verdicts("1"), verdicts("2"));
}

#[test]
fn library_can_come_from_the_environment() {
    let lib = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/lib");
    let out = Command::new(env!("CARGO_BIN_EXE_tierspec"))
        .args(["check", "worldclock"])
        .current_dir(corpus())
        .env("TIERSPEC_LIB", &lib)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));

    let empty = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tierspec"))
        .args(["check", "worldclock"])
        .current_dir(corpus())
        .env("TIERSPEC_LIB", empty.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn manifest_verifies() {
    let (code, out, err) = tierspec(&["verify", "manifest.toml"]);
    assert_eq!(code, 0, "{out}\n{err}");
    assert!(out.lines().all(|l| l.contains("\"verdict\":\"pass\"")), "{out}");
}
