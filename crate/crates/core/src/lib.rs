//! Parsing, checking and simulation of three-tiered specifications:
//! algebraic traits, role contracts and interaction actions.

pub mod diag;
pub mod engine;
pub mod kernel;
pub mod project;
pub mod roles;
pub mod scenario;
pub mod sort;
pub mod store;
pub mod syntax;

pub use diag::{Diagnostic, Severity, Span};
pub use sort::{ObjId, Sort};
pub use store::Store;
