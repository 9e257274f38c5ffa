//! Tiers import only from below: traits from traits, roles from traits, interactions from both.

use std::collections::{BTreeMap, BTreeSet};

use crate::diag::Diagnostic;
use crate::project::Project;
use crate::syntax::ast::{SourceUnit, Term};

struct Names {
    trait_symbols: BTreeSet<String>,
    traits: BTreeSet<String>,
    roles: BTreeSet<String>,
    interactions: BTreeSet<String>,
    /// Method name to the role declaring it.
    role_methods: BTreeMap<String, String>,
    /// Method name to the class defining it.
    bodies: BTreeMap<String, String>,
}

impl Names {
    fn collect(project: &Project) -> Names {
        let mut n = Names {
            trait_symbols: BTreeSet::new(),
            traits: BTreeSet::new(),
            roles: BTreeSet::new(),
            interactions: BTreeSet::new(),
            role_methods: BTreeMap::new(),
            bodies: BTreeMap::new(),
        };
        for u in &project.units {
            match &u.unit {
                SourceUnit::Trait(t) => {
                    n.traits.insert(t.name.clone());
                    n.trait_symbols.extend(t.introduces.iter().map(|o| o.name.clone()));
                    for tu in &t.tuples {
                        n.trait_symbols.extend(tu.fields.iter().map(|f| f.name.clone()));
                    }
                }
                SourceUnit::Role(r) => {
                    n.roles.insert(r.name.clone());
                    for m in &r.methods {
                        n.role_methods.entry(m.name.clone()).or_insert_with(|| r.name.clone());
                    }
                }
                SourceUnit::Interaction(i) => {
                    n.interactions.insert(i.name.clone());
                    for c in &i.classes {
                        for m in &c.methods {
                            n.bodies.entry(m.name.clone()).or_insert_with(|| c.name.clone());
                        }
                    }
                }
            }
        }
        n
    }

    /// What an upward reference to `sym` names, if it is one.
    fn upward(&self, sym: &str) -> Option<String> {
        if self.trait_symbols.contains(sym) {
            return None;
        }
        if let Some(c) = self.bodies.get(sym) {
            return Some(format!("interaction method `{sym}` of class {c}"));
        }
        self.role_methods.get(sym).map(|r| format!("method `{sym}` of role {r}"))
    }
}

fn scan(names: &Names, terms: &[&Term], who: &str, allowed: &str, out: &mut Vec<(crate::diag::Span, String)>) {
    for t in terms {
        for (sym, span) in t.symbols() {
            if let Some(what) = names.upward(&sym) {
                out.push((span, format!("layering violation: {who} refers to {what}; {allowed}")));
            }
        }
    }
}

/// Reports every reference from a lower tier to a higher one.
pub fn check_layering(project: &Project) -> Vec<Diagnostic> {
    let names = Names::collect(project);
    let mut diags = Vec::new();
    for u in project.units.iter().filter(|u| !u.from_library) {
        let mut found = Vec::new();
        match &u.unit {
            SourceUnit::Trait(t) => {
                let allowed = "traits may only refer to traits";
                for inc in &t.includes {
                    if !names.traits.contains(&inc.trait_name)
                        && (names.roles.contains(&inc.trait_name) || names.interactions.contains(&inc.trait_name))
                    {
                        found.push((
                            inc.span,
                            format!("layering violation: trait {} includes {}; {allowed}", t.name, inc.trait_name),
                        ));
                    }
                }
                let mut terms = Vec::new();
                for b in t.asserts.iter().chain(&t.implies) {
                    for e in &b.equations {
                        terms.push(&e.lhs);
                        terms.extend(e.rhs.iter());
                    }
                }
                scan(&names, &terms, &format!("trait {}", t.name), allowed, &mut found);
            }
            SourceUnit::Role(r) => {
                let allowed = "role specifications may only refer to traits";
                if !names.traits.contains(&r.uses) && (names.roles.contains(&r.uses) || names.interactions.contains(&r.uses)) {
                    found.push((
                        r.uses_span,
                        format!("layering violation: role {} uses {}, which is not a trait; {allowed}", r.name, r.uses),
                    ));
                }
                for m in &r.methods {
                    let mut terms: Vec<&Term> = m.requires.iter().collect();
                    terms.extend(&m.modifies);
                    terms.push(&m.ensures);
                    scan(&names, &terms, &format!("role {} (method `{}`)", r.name, m.name), allowed, &mut found);
                }
            }
            SourceUnit::Interaction(_) => {}
        }
        diags.extend(found.into_iter().map(|(span, msg)| Diagnostic::error(span, msg).in_file(&u.path)));
    }
    diags
}
