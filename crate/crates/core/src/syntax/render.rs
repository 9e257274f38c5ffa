//! Pretty-printer producing text that parses back to the same syntax tree.

use std::fmt::Write;

use crate::sort::Sort;
use crate::syntax::ast::*;

pub fn render(unit: &SourceUnit) -> String {
    match unit {
        SourceUnit::Trait(t) => render_trait(t),
        SourceUnit::Role(r) => render_role(r),
        SourceUnit::Interaction(i) => render_interaction(i),
    }
}

pub fn render_term(t: &Term) -> String {
    term(t, 0)
}

pub fn render_action(a: &Action) -> String {
    action(a, 0)
}

fn binary_prec(op: &str) -> Option<(u8, Assoc)> {
    Some(match op {
        "<=>" => (1, Assoc::None),
        "=>" => (2, Assoc::Right),
        "\\/" => (3, Assoc::Left),
        "/\\" => (4, Assoc::Left),
        "=" | "~=" | "<" | "<=" | ">" | ">=" | "in" | "notin" => (6, Assoc::None),
        "+" | "-" => (7, Assoc::Left),
        "*" => (8, Assoc::Left),
        "!" => (10, Assoc::Left),
        _ => return None,
    })
}

#[derive(Clone, Copy)]
enum Assoc {
    Left,
    Right,
    None,
}

const POSTFIX: u8 = 11;

fn paren(s: String, prec: u8, min: u8) -> String {
    if prec < min {
        format!("({s})")
    } else {
        s
    }
}

fn term(t: &Term, min: u8) -> String {
    match &t.kind {
        TermKind::Id(n) => n.clone(),
        TermKind::Int(n) if *n < 0 => paren(n.to_string(), 9, min),
        TermKind::Int(n) => n.to_string(),
        TermKind::Str(s) => {
            let escaped = s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n");
            format!("\"{escaped}\"")
        }
        TermKind::App(op, args) if args.len() == 2 && binary_prec(op).is_some() => {
            let (p, assoc) = binary_prec(op).unwrap();
            let (lmin, rmin) = match assoc {
                Assoc::Left => (p, p + 1),
                Assoc::Right => (p + 1, p),
                Assoc::None => (p + 1, p + 1),
            };
            let s = format!("{} {} {}", term(&args[0], lmin), op, term(&args[1], rmin));
            paren(s, p, min)
        }
        TermKind::App(op, args) if op == "~" && args.len() == 1 => paren(format!("~{}", term(&args[0], 5)), 5, min),
        TermKind::App(op, args) if op == "-" && args.len() == 1 => paren(format!("-{}", term(&args[0], 9)), 9, min),
        TermKind::App(f, args) => format!("{f}({})", terms(args)),
        TermKind::Tuple(fields, sort) => {
            let mut s = format!("[{}]", terms(fields));
            if let Some(sort) = sort {
                write!(s, ":{sort}").unwrap();
            }
            s
        }
        TermKind::Proj(b, f) => format!("{}.{f}", term(b, POSTFIX)),
        TermKind::Pre(b) => format!("{}^", term(b, POSTFIX)),
        TermKind::Post(b) => format!("{}'", term(b, POSTFIX)),
        TermKind::InState(b, st) => format!("{}\\{st}", term(b, POSTFIX)),
        TermKind::Card(b) => format!("|{}|", term(b, 0)),
        TermKind::Obj(id, _) => id.to_string(),
        TermKind::Forall(vars, body) => paren(format!("forall {} ({})", var_decls(vars), term(body, 0)), 0, min),
        TermKind::Ite(c, a, b) => paren(
            format!("if {} then {} else {}", term(c, 0), term(a, 0), term(b, 0)),
            0,
            min,
        ),
    }
}

fn terms(ts: &[Term]) -> String {
    ts.iter().map(|t| term(t, 0)).collect::<Vec<_>>().join(", ")
}

/// Groups consecutive variables of the same sort: `x, y : T, z : U`.
fn var_decls(vars: &[VarDecl]) -> String {
    let pairs: Vec<(&str, &Sort)> = vars.iter().map(|v| (v.name.as_str(), &v.sort)).collect();
    grouped(&pairs)
}

fn grouped(pairs: &[(&str, &Sort)]) -> String {
    let mut groups: Vec<(Vec<&str>, &Sort)> = Vec::new();
    for (name, sort) in pairs {
        match groups.last_mut() {
            Some((names, s)) if *s == *sort => names.push(name),
            _ => groups.push((vec![name], sort)),
        }
    }
    groups
        .iter()
        .map(|(names, sort)| format!("{} : {sort}", names.join(", ")))
        .collect::<Vec<_>>()
        .join(", ")
}

fn sorts(ss: &[Sort]) -> String {
    ss.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
}

fn render_trait(t: &TraitUnit) -> String {
    let mut out = String::new();
    out.push_str(&t.name);
    if !t.params.is_empty() {
        write!(out, "({})", t.params.join(", ")).unwrap();
    }
    out.push_str(" : trait\n");
    if !t.includes.is_empty() {
        let items: Vec<String> = t
            .includes
            .iter()
            .map(|i| {
                if i.actuals.is_empty() {
                    return i.trait_name.clone();
                }
                let actuals: Vec<String> = i
                    .actuals
                    .iter()
                    .map(|a| match a {
                        Actual::Positional(s) => s.to_string(),
                        Actual::Rename { new, old } => format!("{new} for {old}"),
                    })
                    .collect();
                format!("{}({})", i.trait_name, actuals.join(", "))
            })
            .collect();
        writeln!(out, "  includes {}", items.join(", ")).unwrap();
    }
    for tup in &t.tuples {
        let fields: Vec<(&str, &Sort)> = tup.fields.iter().map(|f| (f.name.as_str(), &f.sort)).collect();
        writeln!(out, "  {} tuple of {}", tup.sort, grouped(&fields)).unwrap();
    }
    if !t.introduces.is_empty() {
        out.push_str("  introduces\n");
        for op in &t.introduces {
            let name = match op.fixity {
                Fixity::Plain => op.name.clone(),
                Fixity::Prefix => format!("{} __", op.name),
                Fixity::Infix => format!("__ {} __", op.name),
            };
            writeln!(out, "    {name} : {} -> {}", sorts(&op.args), op.result).unwrap();
        }
    }
    if !t.asserts.is_empty() || !t.partitions.is_empty() || !t.generators.is_empty() {
        out.push_str("  asserts\n");
        for p in &t.partitions {
            writeln!(out, "    {} partitioned by {}", p.sort, p.ops.join(", ")).unwrap();
        }
        for g in &t.generators {
            writeln!(out, "    {} generated by {}", g.sort, g.ops.join(", ")).unwrap();
        }
        blocks(&mut out, &t.asserts);
    }
    if !t.implies.is_empty() {
        out.push_str("  implies\n");
        blocks(&mut out, &t.implies);
    }
    out
}

fn blocks(out: &mut String, blocks: &[EqBlock]) {
    for b in blocks {
        let indent = if b.vars.is_empty() {
            "    "
        } else {
            writeln!(out, "    forall {}", var_decls(&b.vars)).unwrap();
            "      "
        };
        for eq in &b.equations {
            match &eq.rhs {
                Some(rhs) => writeln!(out, "{indent}{} == {};", term(&eq.lhs, 0), term(rhs, 0)).unwrap(),
                None => writeln!(out, "{indent}{};", term(&eq.lhs, 0)).unwrap(),
            }
        }
    }
}

fn params(ps: &[Param]) -> String {
    ps.iter()
        .map(|p| match &p.sort {
            Some(s) => format!("{}: {s}", p.name),
            None => p.name.clone(),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn render_role(r: &RoleUnit) -> String {
    let mut out = format!("{} : role specification\nuses {};\n", r.name, r.uses);
    for m in &r.methods {
        out.push('\n');
        if let Some(ret) = &m.ret {
            write!(out, "{ret} ").unwrap();
        }
        writeln!(out, "{}({}) {{", m.name, params(&m.params)).unwrap();
        if let Some(kw) = m.constructs {
            writeln!(out, "  {} self;", kw.as_str()).unwrap();
        }
        if let Some(req) = &m.requires {
            writeln!(out, "  requires {};", term(req, 0)).unwrap();
        }
        if !m.modifies.is_empty() {
            let items: Vec<String> = m.modifies.iter().map(|t| term(t, 5)).collect();
            writeln!(out, "  modifies {};", items.join(", ")).unwrap();
        }
        writeln!(out, "  ensures {};", term(&m.ensures, 0)).unwrap();
        out.push_str("}\n");
    }
    out
}

fn render_interaction(i: &InteractionUnit) -> String {
    let mut out = format!("{} : interaction specification\n", i.name);
    for c in &i.classes {
        writeln!(out, "\nclass {} {{", c.name).unwrap();
        for m in &c.methods {
            writeln!(out, "  method {}({}) {{", m.name, params(&m.params)).unwrap();
            writeln!(out, "    {}", action(&m.body, 0)).unwrap();
            out.push_str("  }\n");
        }
        out.push_str("}\n");
    }
    out
}

fn invocation(receiver: Option<&Term>, method: &str, args: &[Term]) -> String {
    match receiver {
        Some(r) => format!("{}.{method}({})", term(r, POSTFIX), terms(args)),
        None => format!("{method}({})", terms(args)),
    }
}

fn action(a: &Action, min: u8) -> String {
    match &a.kind {
        ActionKind::Invoke { receiver, method, args } => invocation(receiver.as_ref(), method, args),
        ActionKind::Seq(l, r) => paren(format!("{}; {}", action(l, 1), action(r, 2)), 1, min),
        ActionKind::Choice(l, r) => paren(format!("{} [] {}", action(l, 2), action(r, 3)), 2, min),
        ActionKind::Indep(l, r) => paren(format!("{} /\\ {}", action(l, 3), action(r, 4)), 3, min),
        ActionKind::DistIndep { var, set, body } => {
            paren(format!("|_ {var} in {} _| {}", term(set, 0), action(body, 0)), 0, min)
        }
        ActionKind::DistChoice { var, set, body } => {
            paren(format!("[]_ {var} in {} _[] {}", term(set, 0), action(body, 0)), 0, min)
        }
        ActionKind::Let { var, sort, source, body } => {
            let src = match source {
                LetSource::Invoke(inv) => action(inv, 4),
                LetSource::Term(t) => term(t, 7),
            };
            paren(format!("let {var}:{sort} = {src} in {}", action(body, 0)), 0, min)
        }
        ActionKind::If { guard, body } => paren(format!("if {} then {}", term(guard, 0), action(body, 0)), 0, min),
        ActionKind::While { guard, body } => {
            paren(format!("while {} do {}", term(guard, 0), action(body, 0)), 0, min)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::{parse_action, parse_term, parse_trait};

    #[test]
    fn renders_minimal_trait() {
        let t = parse_trait("T : trait introduces c : -> S").unwrap();
        let text = render(&SourceUnit::Trait(t.clone()));
        assert_eq!(parse_trait(&text).unwrap(), t);
    }

    #[test]
    fn empty_trait_round_trips() {
        let t = parse_trait("E : trait").unwrap();
        assert_eq!(parse_trait(&render(&SourceUnit::Trait(t.clone()))).unwrap(), t);
    }

    #[test]
    fn parenthesizes_by_precedence() {
        for src in [
            "(a \\/ b) /\\ c",
            "a => b => c",
            "(a => b) => c",
            "a - (b - c)",
            "~(a = b)",
            "x - -5",
            "f(forall x : T (p(x)), y)",
            "(if a then b else c) = d",
        ] {
            let t = parse_term(src).unwrap();
            let again = parse_term(&render_term(&t)).unwrap();
            assert_eq!(again, t, "{src} rendered as {}", render_term(&t));
        }
    }

    #[test]
    fn actions_round_trip() {
        for src in [
            "(A(); B()) /\\ C()",
            "A(); (if g then B()); C()",
            "|_ z in s _| z.U()",
            "let i:Int = m.G() in S(i)",
            "(A() [] B()) /\\ D()",
        ] {
            let a = parse_action(src).unwrap();
            let again = parse_action(&render_action(&a)).unwrap();
            assert_eq!(again, a, "{src} rendered as {}", render_action(&a));
        }
    }
}
