use std::collections::BTreeSet;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::sort::{ObjId, Sort};

/// Which of the two states around an invocation a term is read in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StateTag {
    Pre,
    Post,
    /// Either state; both readings must agree.
    Any,
}

impl StateTag {
    pub fn from_name(name: &str) -> Option<StateTag> {
        match name {
            "pre" => Some(StateTag::Pre),
            "post" => Some(StateTag::Post),
            "any" => Some(StateTag::Any),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StateTag::Pre => "pre",
            StateTag::Post => "post",
            StateTag::Any => "any",
        }
    }
}

/// A ground value produced by evaluation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Str(String),
    Tuple(Sort, Vec<Value>),
    /// A finite set; the sort is that of the set itself.
    Set(Sort, BTreeSet<Value>),
    Obj(ObjId, Sort),
    State(StateTag),
}

impl Value {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_obj(&self) -> Option<ObjId> {
        match self {
            Value::Obj(id, _) => Some(*id),
            _ => None,
        }
    }

    /// Renders the value, naming objects through `label`.
    pub fn display_with(&self, label: &dyn Fn(ObjId) -> String) -> String {
        match self {
            Value::Bool(b) => b.to_string(),
            Value::Int(n) => n.to_string(),
            Value::Str(s) => format!("{s:?}"),
            Value::Tuple(_, fields) => {
                let inner: Vec<String> = fields.iter().map(|f| f.display_with(label)).collect();
                format!("[{}]", inner.join(", "))
            }
            Value::Set(_, elems) => {
                let inner: Vec<String> = elems.iter().map(|e| e.display_with(label)).collect();
                format!("{{{}}}", inner.join(", "))
            }
            Value::Obj(id, _) => label(*id),
            Value::State(tag) => tag.name().to_string(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_with(&|id| id.to_string()))
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}
