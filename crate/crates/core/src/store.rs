//! The global object store shared by role and interaction execution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::kernel::value::Value;
use crate::sort::{ObjId, Sort};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjEntry {
    pub sort: Sort,
    pub label: String,
    pub value: Value,
}

/// Object values, state-interpreted relations and environment constants.
///
/// Equality ignores the version counter and the identity allocator.
#[derive(Clone, Debug, Default)]
pub struct Store {
    pub objects: BTreeMap<ObjId, ObjEntry>,
    /// relation name -> holder -> related objects; empty sets are not stored.
    pub relations: BTreeMap<String, BTreeMap<ObjId, BTreeSet<ObjId>>>,
    pub env: BTreeMap<String, Value>,
    pub version: u64,
    pub next_id: u32,
}

impl PartialEq for Store {
    fn eq(&self, other: &Store) -> bool {
        self.objects == other.objects && self.relations == other.relations && self.env == other.env
    }
}

impl Eq for Store {}

impl Store {
    pub fn new() -> Store {
        Store {
            next_id: 1,
            ..Store::default()
        }
    }

    pub fn alloc(&mut self, sort: Sort, label: impl Into<String>, value: Value) -> ObjId {
        let id = ObjId(self.next_id.max(1));
        self.next_id = id.0 + 1;
        self.objects.insert(
            id,
            ObjEntry {
                sort,
                label: label.into(),
                value,
            },
        );
        id
    }

    pub fn contains(&self, id: ObjId) -> bool {
        self.objects.contains_key(&id)
    }

    pub fn value(&self, id: ObjId) -> Option<&Value> {
        self.objects.get(&id).map(|e| &e.value)
    }

    pub fn sort(&self, id: ObjId) -> Option<&Sort> {
        self.objects.get(&id).map(|e| &e.sort)
    }

    pub fn set_value(&mut self, id: ObjId, value: Value) {
        if let Some(e) = self.objects.get_mut(&id) {
            e.value = value;
        }
    }

    pub fn label(&self, id: ObjId) -> String {
        self.objects.get(&id).map(|e| e.label.clone()).unwrap_or_else(|| id.to_string())
    }

    pub fn find_label(&self, label: &str) -> Option<ObjId> {
        self.objects.iter().find(|(_, e)| e.label == label).map(|(id, _)| *id)
    }

    pub fn objects_of(&self, sort: &Sort) -> Vec<ObjId> {
        self.objects.iter().filter(|(_, e)| &e.sort == sort).map(|(id, _)| *id).collect()
    }

    pub fn related(&self, rel: &str, holder: ObjId) -> BTreeSet<ObjId> {
        self.relations
            .get(rel)
            .and_then(|m| m.get(&holder))
            .cloned()
            .unwrap_or_default()
    }

    /// Holders whose `rel` set contains `target`.
    pub fn holders(&self, rel: &str, target: ObjId) -> Vec<ObjId> {
        self.relations
            .get(rel)
            .map(|m| m.iter().filter(|(_, s)| s.contains(&target)).map(|(h, _)| *h).collect())
            .unwrap_or_default()
    }

    pub fn relate(&mut self, rel: &str, holder: ObjId, target: ObjId) {
        self.relations
            .entry(rel.to_string())
            .or_default()
            .entry(holder)
            .or_default()
            .insert(target);
    }

    pub fn unrelate(&mut self, rel: &str, holder: ObjId, target: ObjId) {
        if let Some(m) = self.relations.get_mut(rel) {
            if let Some(s) = m.get_mut(&holder) {
                s.remove(&target);
                if s.is_empty() {
                    m.remove(&holder);
                }
            }
            if m.is_empty() {
                self.relations.remove(rel);
            }
        }
    }

    /// Targets that appear in more than one holder's set of some relation.
    pub fn shared_targets(&self) -> Vec<(String, ObjId, Vec<ObjId>)> {
        let mut out = Vec::new();
        for (rel, m) in &self.relations {
            let mut seen: BTreeMap<ObjId, Vec<ObjId>> = BTreeMap::new();
            for (holder, targets) in m {
                for t in targets {
                    seen.entry(*t).or_default().push(*holder);
                }
            }
            for (t, holders) in seen {
                if holders.len() > 1 {
                    out.push((rel.clone(), t, holders));
                }
            }
        }
        out
    }

    pub fn display_value(&self, v: &Value) -> String {
        v.display_with(&|id| self.label(id))
    }

    /// Multi-line human-readable dump, used in divergence reports.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (id, e) in &self.objects {
            writeln!(out, "  {} ({id}) : {} = {}", e.label, e.sort, self.display_value(&e.value)).unwrap();
        }
        for (rel, m) in &self.relations {
            for (holder, targets) in m {
                let names: Vec<String> = targets.iter().map(|t| self.label(*t)).collect();
                writeln!(out, "  {rel}({}) = {{{}}}", self.label(*holder), names.join(", ")).unwrap();
            }
        }
        out
    }

    /// Lines describing where two stores differ.
    pub fn diff(&self, other: &Store) -> Vec<String> {
        let mut out = Vec::new();
        for (id, e) in &self.objects {
            match other.objects.get(id) {
                Some(o) if o.value != e.value => out.push(format!(
                    "{}: {} vs {}",
                    e.label,
                    self.display_value(&e.value),
                    other.display_value(&o.value)
                )),
                None => out.push(format!("{}: only in first store", e.label)),
                _ => {}
            }
        }
        for (id, e) in &other.objects {
            if !self.objects.contains_key(id) {
                out.push(format!("{}: only in second store", e.label));
            }
        }
        if self.relations != other.relations {
            out.push("attachment relation differs".to_string());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relation_edits_keep_canonical_form() {
        let mut s = Store::new();
        let m = s.alloc(Sort::simple("M"), "m", Value::Int(0));
        let z = s.alloc(Sort::simple("Z"), "z", Value::Int(0));
        let before = s.clone();
        s.relate("r", m, z);
        assert_eq!(s.holders("r", z), vec![m]);
        s.unrelate("r", m, z);
        assert_eq!(s, before);
    }

    #[test]
    fn equality_ignores_version() {
        let mut a = Store::new();
        a.alloc(Sort::simple("M"), "m", Value::Int(1));
        let mut b = a.clone();
        b.version += 3;
        assert_eq!(a, b);
    }
}
