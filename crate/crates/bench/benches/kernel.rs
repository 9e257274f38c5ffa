use std::collections::BTreeMap;
use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, Criterion};
use tierspec::engine::{Policy, System};
use tierspec::kernel::{check_obligations, flatten, normalize, Budget};
use tierspec::project::{LoadOptions, Project};
use tierspec::scenario::{run_scenario, Scenario};
use tierspec::syntax::parse_term;

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn project() -> Project {
    Project::load(&[corpus().join("worldclock")], &LoadOptions::default()).unwrap()
}

fn kernel(c: &mut Criterion) {
    let p = project();
    let th = flatten("Time", &p.traits()).unwrap();
    let term = parse_term("toInt(succ(pred(fromInt(86399))))").unwrap();
    let env = BTreeMap::new();
    c.bench_function("normalize succ/pred", |b| b.iter(|| normalize(&th, black_box(&term), &env).unwrap()));

    let budget = Budget {
        random_count: 100,
        ..Budget::default()
    };
    c.bench_function("Time obligations (grid + 100 random)", |b| b.iter(|| check_obligations(&th, &budget)));
}

fn simulation(c: &mut Criterion) {
    let p = project();
    let (sys, errors) = System::bind(&p);
    assert!(errors.is_empty());
    let sc = Scenario::load(&corpus().join("scenarios/consistency.scenario")).unwrap();
    c.bench_function("consistency scenario", |b| {
        b.iter(|| run_scenario(&sys, &sc, Policy::default()).unwrap())
    });
    c.bench_function("load and bind corpus", |b| b.iter(|| System::bind(&project())));
}

criterion_group!(benches, kernel, simulation);
criterion_main!(benches);
