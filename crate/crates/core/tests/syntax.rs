use std::path::PathBuf;

use proptest::prelude::*;
use tierspec::syntax::ast::{Term, TermKind, UnitKind, VarDecl};
use tierspec::syntax::{parse_term, parse_unit, render, render_term};
use tierspec::Sort;

fn corpus_files() -> Vec<(PathBuf, UnitKind)> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut out = Vec::new();
    for dir in ["worldclock", "mutants"] {
        for e in std::fs::read_dir(root.join(dir)).unwrap() {
            let p = e.unwrap().path();
            if let Some(k) = p.extension().and_then(|e| e.to_str()).and_then(UnitKind::from_extension) {
                out.push((p, k));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn corpus_units_round_trip() {
    let files = corpus_files();
    assert!(files.len() >= 11);
    for (path, kind) in files {
        let text = std::fs::read_to_string(&path).unwrap();
        let unit = parse_unit(&text, kind).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let printed = render(&unit);
        let again = parse_unit(&printed, kind).unwrap_or_else(|e| panic!("{}: {e}\n{printed}", path.display()));
        assert_eq!(unit, again, "{}", path.display());
        assert_eq!(printed, render(&again), "rendering is not a fixed point for {}", path.display());
    }
}

fn t(kind: TermKind) -> Term {
    Term::new(kind, Default::default())
}

fn leaf() -> impl Strategy<Value = Term> {
    prop_oneof![
        prop::sample::select(vec!["a", "b", "self", "zs", "pre"]).prop_map(Term::id),
        (0i64..100_000).prop_map(Term::int),
        (-100_000i64..0).prop_map(Term::int),
        "[a-z ]{0,6}".prop_map(|s| t(TermKind::Str(s))),
    ]
}

fn term() -> impl Strategy<Value = Term> {
    leaf().prop_recursive(4, 32, 3, |inner| {
        let binop = prop::sample::select(vec!["=", "~=", "<=", "<", "in", "+", "-", "*", "/\\", "\\/", "=>", "!"]);
        prop_oneof![
            (binop, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Term::app(op, vec![a, b])),
            inner.clone().prop_map(Term::not),
            (prop::sample::select(vec!["f", "succ", "update"]), prop::collection::vec(inner.clone(), 1..3))
                .prop_map(|(f, args)| Term::app(f, args)),
            (prop::collection::vec(inner.clone(), 1..4), any::<bool>()).prop_map(|(xs, asc)| {
                t(TermKind::Tuple(xs, asc.then(|| Sort::simple("Time"))))
            }),
            (inner.clone(), prop::sample::select(vec!["hour", "zonalTime"]))
                .prop_map(|(x, f)| t(TermKind::Proj(Box::new(x), f.to_string()))),
            inner.clone().prop_map(|x| t(TermKind::Pre(Box::new(x)))),
            inner.clone().prop_map(|x| t(TermKind::Card(Box::new(x)))),
            (inner.clone(), inner.clone(), inner.clone())
                .prop_map(|(c, a, b)| t(TermKind::Ite(Box::new(c), Box::new(a), Box::new(b)))),
            inner.clone().prop_map(|b| t(TermKind::Forall(
                vec![VarDecl { name: "z".into(), sort: Sort::simple("ZonalClock"), span: Default::default() }],
                Box::new(b),
            ))),
        ]
    })
}

proptest! {
    #[test]
    fn rendered_terms_parse_back(x in term()) {
        let text = render_term(&x);
        let back = parse_term(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(back, x, "{}", text);
    }
}
