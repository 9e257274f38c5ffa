//! The `tierspec` command line: argument parsing and the command implementations.
//!
//! Commands write line-delimited JSON reports to `out` and human-readable
//! diagnostics to `err`, and return the process exit code.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use tierspec::engine::{check_independence, check_layering, check_redundancy, derive_contract, Policy, System};
use tierspec::kernel::{check_obligations, flatten, Budget, Verdict};
use tierspec::project::{LoadOptions, Originals, Project, LIB_ENV};
use tierspec::roles::Category;
use tierspec::scenario::{run_scenario, Scenario, Status};
use tierspec::Diagnostic;

/// Exit code for a clean run.
pub const EXIT_OK: i32 = 0;
/// Exit code for static errors and failed obligations.
pub const EXIT_STATIC: i32 = 1;
/// Exit code for a contract violation during simulation.
pub const EXIT_DYNAMIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tierspec", version, about = "Check, test and simulate three-tiered specifications")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, sort-check and bind specifications and enforce the layering rule.
    Check(Common),
    /// Test trait obligations and check interaction bodies against role contracts.
    Test {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        budget: BudgetArgs,
        /// Random stores per interaction method for body and independence checks.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Run a scenario and print its trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario's number of permutation samples.
        #[arg(long)]
        perm_samples: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        while_cap: usize,
    },
    /// Print the V / O / O-E category of every role method.
    Categorize(Common),
    /// Run every entry of a corpus manifest and compare traces with the golden files.
    Verify {
        #[arg(default_value = "corpus/manifest.toml")]
        manifest: PathBuf,
        #[arg(long, env = LIB_ENV)]
        lib: Option<PathBuf>,
        /// Rewrite golden files instead of comparing against them.
        #[arg(long)]
        bless: bool,
    },
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Specification files or directories.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// Trait library directory (defaults to the built-in library).
    #[arg(long, env = LIB_ENV)]
    pub lib: Option<PathBuf>,
    /// Restore original axiom wordings: all of them, or a comma-separated list of tags.
    #[arg(long, num_args = 0..=1, default_missing_value = "all", value_name = "TAGS")]
    pub original_axioms: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct BudgetArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Random cases per obligation after the grid.
    #[arg(long, default_value_t = 1000)]
    pub random_count: usize,
    /// Grid override such as `Time.hour=0,12,23` (repeatable).
    #[arg(long)]
    pub grid: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub perm_samples: usize,
    #[arg(long, default_value_t = 10_000)]
    pub while_cap: usize,
}

impl BudgetArgs {
    fn budget(&self) -> Result<Budget, String> {
        let mut b = Budget {
            seed: self.seed,
            random_count: self.random_count,
            ..Budget::default()
        };
        for g in &self.grid {
            b.set_grid(g)?;
        }
        Ok(b)
    }
}

impl Default for BudgetArgs {
    fn default() -> BudgetArgs {
        BudgetArgs {
            seed: 42,
            random_count: 1000,
            grid: vec![],
            perm_samples: 5,
            while_cap: 10_000,
        }
    }
}

fn line(out: &mut dyn Write, v: impl Serialize) {
    let _ = writeln!(out, "{}", serde_json::to_string(&v).expect("reports serialize"));
}

fn report(err: &mut dyn Write, diags: &[Diagnostic]) {
    for d in diags {
        let _ = writeln!(err, "{d}");
    }
}

fn load_options(common: &Common) -> LoadOptions {
    let originals = match common.original_axioms.as_deref() {
        None => Originals::None,
        Some("all") => Originals::All,
        Some(tags) => Originals::Tags(tags.split(',').map(|t| t.trim().to_string()).collect()),
    };
    LoadOptions {
        lib: common.lib.clone(),
        originals,
    }
}

/// A project that passed every static check.
struct Checked {
    project: Project,
    system: System,
}

/// Loads, binds and layer-checks; prints diagnostics and returns `None` on any error.
fn check(common: &Common, err: &mut dyn Write) -> Option<Checked> {
    let project = match Project::load(&common.paths, &load_options(common)) {
        Ok(p) => p,
        Err(diags) => {
            report(err, &diags);
            return None;
        }
    };
    report(err, &project.notes);
    let (system, mut errors) = System::bind(&project);
    report(err, &system.lints);
    errors.extend(check_layering(&project));
    report(err, &errors);
    errors.is_empty().then_some(Checked { project, system })
}

fn cmd_check(common: &Common, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(c) = check(common, err) else { return EXIT_STATIC };
    line(
        out,
        json!({
            "report": "check",
            "units": c.project.units.iter().filter(|u| !u.from_library).count(),
            "roles": c.system.roles.len(),
            "bodies": c.system.all_bodies().count(),
            "verdict": "pass",
        }),
    );
    EXIT_OK
}

/// User traits that no other user trait includes; their theories cover all the others.
fn root_traits(project: &Project) -> Vec<String> {
    let users: Vec<_> = project.user_traits().map(|(t, _)| t).collect();
    let included: BTreeSet<&str> = users
        .iter()
        .flat_map(|t| t.includes.iter().map(|i| i.trait_name.as_str()))
        .collect();
    users
        .iter()
        .filter(|t| !included.contains(t.name.as_str()))
        .map(|t| t.name.clone())
        .collect()
}

fn cmd_test(common: &Common, args: &BudgetArgs, samples: usize, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let budget = match args.budget() {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_STATIC;
        }
    };
    let Some(c) = check(common, err) else { return EXIT_STATIC };
    let mut failed = 0usize;
    let mut seen = BTreeSet::new();
    let traits = c.project.traits();
    for name in root_traits(&c.project) {
        let th = match flatten(&name, &traits) {
            Ok(th) => th,
            Err(e) => {
                report(err, &[e.to_diagnostic()]);
                return EXIT_STATIC;
            }
        };
        for r in check_obligations(&th, &budget) {
            if !seen.insert((r.origin.clone(), r.kind, r.text.clone())) {
                continue;
            }
            if matches!(r.verdict, Verdict::Fail | Verdict::Error) {
                failed += 1;
            }
            line(out, json!({"report": "obligation", "result": r}));
        }
    }
    for def in c.system.all_bodies() {
        match derive_contract(&c.system, &def.class, &def.params, &def.source) {
            Ok(d) => line(out, json!({"report": "derived", "class": def.class, "method": def.name, "contract": d})),
            Err(e) => {
                failed += 1;
                line(out, json!({"report": "derived", "class": def.class, "method": def.name, "error": e}));
            }
        }
    }
    for r in check_redundancy(&c.system, &budget, samples, args.while_cap) {
        failed += usize::from(r.verdict == "fail");
        line(out, json!({"report": "redundancy", "result": r}));
    }
    for r in check_independence(&c.system, &budget, samples, args.perm_samples, args.while_cap) {
        failed += usize::from(r.verdict == "fail");
        line(out, json!({"report": "independence", "result": r}));
    }
    line(out, json!({"report": "summary", "failed": failed, "seed": budget.seed}));
    if failed > 0 {
        EXIT_STATIC
    } else {
        EXIT_OK
    }
}

/// Simulation settings taken from the command line.
#[derive(Clone, Debug, Default)]
pub struct SimOptions {
    pub seed: Option<u64>,
    pub perm_samples: Option<usize>,
    pub while_cap: Option<usize>,
}

fn cmd_simulate(common: &Common, scenario: &Path, opts: &SimOptions, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(c) = check(common, err) else { return EXIT_STATIC };
    let sc = match Scenario::load(scenario) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "{}: error: {e}", scenario.display());
            return EXIT_STATIC;
        }
    };
    let defaults = Policy::default();
    let policy = Policy {
        seed: opts.seed.or(sc.seed).unwrap_or(defaults.seed),
        perm_samples: opts.perm_samples.or(sc.perm_samples).unwrap_or(defaults.perm_samples),
        while_cap: opts.while_cap.unwrap_or(defaults.while_cap),
        check_contracts: true,
    };
    let run = match run_scenario(&c.system, &sc, policy) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "{}: error: {e}", scenario.display());
            return EXIT_STATIC;
        }
    };
    for e in &run.trace {
        let _ = writeln!(out, "{}", e.to_json());
    }
    match run.status {
        Status::Ok => EXIT_OK,
        Status::Violation(v) => {
            let blame = if v.is_caller_error() { "caller error" } else { "specification inconsistency" };
            let _ = writeln!(err, "{}: {v} ({blame})", scenario.display());
            EXIT_DYNAMIC
        }
        Status::CheckFailed { name } => {
            let _ = writeln!(err, "{}: check failed: {name}", scenario.display());
            EXIT_DYNAMIC
        }
    }
}

fn cmd_categorize(common: &Common, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(c) = check(common, err) else { return EXIT_STATIC };
    let mut code = EXIT_OK;
    for (role_name, _) in c.project.roles() {
        let Some(role) = c.system.role(&role_name.name) else { continue };
        let mut groups: BTreeMap<Category, Vec<String>> = BTreeMap::new();
        for (method, cat) in role.categories() {
            match cat {
                Ok(cat) => groups.entry(cat).or_default().push(method),
                Err(message) => {
                    code = EXIT_STATIC;
                    line(out, json!({"role": role.name, "method": method, "category": "error", "message": message}));
                }
            }
        }
        for (cat, methods) in groups {
            line(out, json!({"role": role.name, "category": cat.to_string(), "methods": methods}));
        }
    }
    code
}

/// One entry of a corpus manifest.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRun {
    pub name: String,
    /// `check`, `test`, `simulate` or `categorize`.
    pub command: String,
    pub paths: Vec<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub golden: Option<PathBuf>,
    #[serde(default)]
    pub expect_exit: i32,
    pub original_axioms: Option<String>,
    /// Text every line of stderr together must contain.
    pub expect_stderr: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(rename = "run")]
    pub runs: Vec<ManifestRun>,
}

/// Runs one manifest entry in-process and returns (exit code, stdout, stderr).
pub fn run_entry(entry: &ManifestRun, base: &Path, lib: Option<PathBuf>) -> (i32, String, String) {
    let common = Common {
        paths: entry.paths.iter().map(|p| base.join(p)).collect(),
        lib,
        original_axioms: entry.original_axioms.clone(),
    };
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = match entry.command.as_str() {
        "check" => cmd_check(&common, &mut out, &mut err),
        "test" => cmd_test(&common, &BudgetArgs::default(), 20, &mut out, &mut err),
        "categorize" => cmd_categorize(&common, &mut out, &mut err),
        "simulate" => match &entry.scenario {
            Some(s) => cmd_simulate(&common, &base.join(s), &SimOptions::default(), &mut out, &mut err),
            None => {
                let _ = writeln!(err, "error: simulate needs a scenario");
                EXIT_STATIC
            }
        },
        other => {
            let _ = writeln!(err, "error: unknown command `{other}`");
            EXIT_STATIC
        }
    };
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}

fn first_difference(expected: &str, actual: &str) -> String {
    let (e, a): (Vec<&str>, Vec<&str>) = (expected.lines().collect(), actual.lines().collect());
    for i in 0..e.len().max(a.len()) {
        let (x, y) = (e.get(i).copied().unwrap_or("<end>"), a.get(i).copied().unwrap_or("<end>"));
        if x != y {
            return format!("line {}: expected {x} got {y}", i + 1);
        }
    }
    "identical".into()
}

fn cmd_verify(manifest: &Path, lib: Option<PathBuf>, bless: bool, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let parsed = std::fs::read_to_string(manifest)
        .map_err(|e| e.to_string())
        .and_then(|t| toml::from_str::<Manifest>(&t).map_err(|e| e.to_string()));
    let m = match parsed {
        Ok(m) => m,
        Err(e) => {
            let _ = writeln!(err, "{}: error: {e}", manifest.display());
            return EXIT_STATIC;
        }
    };
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut failures = 0;
    for entry in &m.runs {
        let (code, stdout, stderr) = run_entry(entry, base, lib.clone());
        let mut problems = Vec::new();
        if code != entry.expect_exit {
            problems.push(format!("exit {code}, expected {}", entry.expect_exit));
        }
        if let Some(want) = &entry.expect_stderr {
            if !stderr.contains(want.as_str()) {
                problems.push(format!("stderr lacks `{want}`"));
            }
        }
        if let Some(g) = &entry.golden {
            let path = base.join(g);
            if bless {
                if let Err(e) = std::fs::write(&path, &stdout) {
                    problems.push(format!("cannot write {}: {e}", path.display()));
                }
            } else {
                match std::fs::read_to_string(&path) {
                    Ok(golden) if golden == stdout => {}
                    Ok(golden) => problems.push(format!("trace differs from golden: {}", first_difference(&golden, &stdout))),
                    Err(e) => problems.push(format!("cannot read {}: {e}", path.display())),
                }
            }
        }
        failures += usize::from(!problems.is_empty());
        line(
            out,
            json!({
                "run": entry.name,
                "exit": code,
                "verdict": if problems.is_empty() { "pass" } else { "fail" },
                "problems": problems,
            }),
        );
    }
    if failures > 0 {
        EXIT_STATIC
    } else {
        EXIT_OK
    }
}

/// Executes a parsed command line.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match &cli.command {
        Command::Check(common) => cmd_check(common, out, err),
        Command::Test { common, budget, samples } => cmd_test(common, budget, *samples, out, err),
        Command::Simulate {
            common,
            scenario,
            seed,
            perm_samples,
            while_cap,
        } => {
            let opts = SimOptions {
                seed: *seed,
                perm_samples: *perm_samples,
                while_cap: Some(*while_cap),
            };
            cmd_simulate(common, scenario, &opts, out, err)
        }
        Command::Categorize(common) => cmd_categorize(common, out, err),
        Command::Verify { manifest, lib, bless } => cmd_verify(manifest, lib.clone(), *bless, out, err),
    }
}
