//! Rule query language: parsing, index-backed evaluation and a per-document
//! scan evaluator that serves as the semantic reference.
//!
//! ```text
//! query    = or ;
//! or       = and { "OR" and } ;
//! and      = unary { "AND" unary } ;
//! unary    = [ "NOT" ] primary ;
//! primary  = "(" query ")" | near | atom ;
//! near     = atom "NEAR" [ "/" INT ] atom ;
//! atom     = PHRASE | RANGE | REGEX | fuzzy | wildcard | TERM ;
//! fuzzy    = TERM "~" [ INT ] ;
//! PHRASE   = '"' TERM { TERM } '"' ;
//! RANGE    = "[" TERM "TO" TERM "]"      (inclusive)
//!          | "{" TERM "TO" TERM "}" ;    (exclusive)
//! REGEX    = "/" pattern "/" ;
//! ```
//!
//! A run of bare words without operators is a phrase, so `enact my dream`
//! and `"enact my dream"` parse identically.

mod ast;
mod eval;
mod fuzzy;
mod oracle;
mod parser;
pub mod regex;
mod wildcard;

use thiserror::Error;

pub use ast::{QueryExpr, DEFAULT_FUZZY_EDITS, DEFAULT_NEAR_WINDOW, MAX_FUZZY_EDITS};
pub use eval::{evaluate, evaluate_ordinals, MatchSet};
pub use fuzzy::{levenshtein, within_distance};
pub use oracle::{highlight, matches_text, scan_oracle, ScanMatcher};
pub use parser::parse;
pub use wildcard::wildcard_match;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("parse error at {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("invalid query: {0}")]
    Invalid(String),
    #[error("evaluation of {leaf} failed: {message}")]
    Eval { leaf: String, message: String },
}

impl QueryError {
    pub(crate) fn parse(position: usize, message: impl Into<String>) -> Self {
        QueryError::Parse {
            position,
            message: message.into(),
        }
    }
}
