use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};

/// A sort name, possibly applied to sort arguments (`Set[ZonalClock]`, `Obj[Time]`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sort {
    pub name: String,
    pub args: Vec<Sort>,
}

impl Sort {
    pub fn simple(name: impl Into<String>) -> Sort {
        Sort {
            name: name.into(),
            args: Vec::new(),
        }
    }

    pub fn applied(name: impl Into<String>, args: Vec<Sort>) -> Sort {
        Sort {
            name: name.into(),
            args,
        }
    }

    pub fn bool() -> Sort {
        Sort::simple("Bool")
    }

    pub fn int() -> Sort {
        Sort::simple("Int")
    }

    pub fn string() -> Sort {
        Sort::simple("String")
    }

    pub fn state() -> Sort {
        Sort::simple("State")
    }

    pub fn is(&self, name: &str) -> bool {
        self.args.is_empty() && self.name == name
    }

    /// Replaces whole sub-sorts according to `map`, outermost first.
    pub fn substitute(&self, map: &BTreeMap<Sort, Sort>) -> Sort {
        if let Some(to) = map.get(self) {
            return to.clone();
        }
        Sort {
            name: self.name.clone(),
            args: self.args.iter().map(|a| a.substitute(map)).collect(),
        }
    }

    pub fn mentions(&self, other: &Sort) -> bool {
        self == other || self.args.iter().any(|a| a.mentions(other))
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)?;
        if !self.args.is_empty() {
            write!(f, "[")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{a}")?;
            }
            write!(f, "]")?;
        }
        Ok(())
    }
}

impl Serialize for Sort {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Identity of a mutable object in a store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjId(pub u32);

impl fmt::Display for ObjId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}
