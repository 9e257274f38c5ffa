//! Concrete syntax: lexer, parser and renderer for `.trait`, `.role` and `.inter` files.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod render;

use thiserror::Error;

use crate::diag::{Diagnostic, Span};

pub use parser::{parse_action, parse_any, parse_interaction, parse_role, parse_term, parse_trait, parse_unit};
pub use render::{render, render_action, render_term};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{span}: {message}{}", expected_suffix(.expected))]
pub struct ParseError {
    pub span: Span,
    pub message: String,
    pub expected: Vec<String>,
}

fn expected_suffix(expected: &[String]) -> String {
    match expected {
        [] => String::new(),
        [one] => format!(" (expected {one})"),
        many => format!(" (expected one of {})", many.join(", ")),
    }
}

impl ParseError {
    pub fn new(span: Span, message: impl Into<String>, expected: Vec<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
            expected,
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic::error(self.span, format!("{}{}", self.message, expected_suffix(&self.expected)))
    }
}
