use std::fmt;

use serde::{Deserialize, Serialize};

use super::QueryError;

pub const DEFAULT_NEAR_WINDOW: u32 = 10;
pub const DEFAULT_FUZZY_EDITS: u8 = 2;
pub const MAX_FUZZY_EDITS: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum QueryExpr {
    Term(String),
    Phrase(Vec<String>),
    /// `*` matches any run of characters (including none), `?` exactly one.
    Wildcard(String),
    Fuzzy {
        term: String,
        max_edits: u8,
    },
    /// Full match against a dictionary term.
    Regex(String),
    /// Lexicographic term range.
    Range {
        low: String,
        high: String,
        inclusive: bool,
    },
    /// Unordered proximity: some occurrence of each side within `window`
    /// token positions, measured between the nearest ends.
    Near {
        left: Box<QueryExpr>,
        right: Box<QueryExpr>,
        window: u32,
    },
    And(Vec<QueryExpr>),
    Or(Vec<QueryExpr>),
    /// Only meaningful as a direct child of `And`.
    Not(Box<QueryExpr>),
}

impl QueryExpr {
    pub fn term(t: impl Into<String>) -> Self {
        QueryExpr::Term(t.into())
    }

    pub fn phrase<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        QueryExpr::Phrase(terms.into_iter().map(Into::into).collect())
    }

    pub fn near(left: QueryExpr, right: QueryExpr, window: u32) -> Self {
        QueryExpr::Near {
            left: Box::new(left),
            right: Box::new(right),
            window,
        }
    }

    pub fn not(inner: QueryExpr) -> Self {
        QueryExpr::Not(Box::new(inner))
    }

    pub fn is_span_operand(&self) -> bool {
        matches!(self, QueryExpr::Term(_) | QueryExpr::Phrase(_))
    }

    /// Rewrites single-term phrases to terms, recursively.
    pub fn normalized(self) -> Self {
        match self {
            QueryExpr::Phrase(mut t) if t.len() == 1 => QueryExpr::Term(t.pop().unwrap()),
            QueryExpr::Near {
                left,
                right,
                window,
            } => QueryExpr::Near {
                left: Box::new(left.normalized()),
                right: Box::new(right.normalized()),
                window,
            },
            QueryExpr::And(c) => QueryExpr::And(c.into_iter().map(Self::normalized).collect()),
            QueryExpr::Or(c) => QueryExpr::Or(c.into_iter().map(Self::normalized).collect()),
            QueryExpr::Not(inner) => QueryExpr::Not(Box::new(inner.normalized())),
            other => other,
        }
    }

    /// Checks the structural invariants. A `Not` is only accepted directly
    /// under an `And` that also has a positive child.
    pub fn validate(&self) -> Result<(), QueryError> {
        self.validate_inner(false)
    }

    fn validate_inner(&self, under_and: bool) -> Result<(), QueryError> {
        let invalid = |m: String| Err(QueryError::Invalid(m));
        match self {
            QueryExpr::Term(t) if t.is_empty() => invalid("empty term".into()),
            QueryExpr::Phrase(t) if t.len() < 2 => {
                invalid(format!("phrase needs at least two terms, got {}", t.len()))
            }
            QueryExpr::Phrase(t) if t.iter().any(String::is_empty) => {
                invalid("empty term in phrase".into())
            }
            QueryExpr::Fuzzy { max_edits, .. } if *max_edits > MAX_FUZZY_EDITS => invalid(
                format!("fuzzy edits {max_edits} exceed the maximum of {MAX_FUZZY_EDITS}"),
            ),
            QueryExpr::Near {
                left,
                right,
                window,
            } => {
                if *window < 1 {
                    return invalid("NEAR window must be at least 1".into());
                }
                for side in [left, right] {
                    if !side.is_span_operand() {
                        return invalid("NEAR operands must be terms or phrases".into());
                    }
                    side.validate_inner(false)?;
                }
                Ok(())
            }
            QueryExpr::And(children) => {
                if !children.is_empty()
                    && children.iter().all(|c| matches!(c, QueryExpr::Not(_)))
                {
                    return invalid("AND needs at least one non-negated operand".into());
                }
                children.iter().try_for_each(|c| c.validate_inner(true))
            }
            QueryExpr::Or(children) => children.iter().try_for_each(|c| c.validate_inner(false)),
            QueryExpr::Not(inner) => {
                if !under_and {
                    return invalid("NOT is only allowed inside AND".into());
                }
                if matches!(**inner, QueryExpr::Not(_)) {
                    return invalid("double negation".into());
                }
                inner.validate_inner(false)
            }
            _ => Ok(()),
        }
    }

    /// Leaves that contribute positively to a match (not under `Not`).
    pub fn positive_leaves(&self) -> Vec<&QueryExpr> {
        let mut out = Vec::new();
        self.collect_positive(&mut out);
        out
    }

    fn collect_positive<'a>(&'a self, out: &mut Vec<&'a QueryExpr>) {
        match self {
            QueryExpr::And(c) | QueryExpr::Or(c) => c.iter().for_each(|x| x.collect_positive(out)),
            QueryExpr::Not(_) => {}
            other => out.push(other),
        }
    }
}

fn needs_parens(e: &QueryExpr) -> bool {
    matches!(e, QueryExpr::And(_) | QueryExpr::Or(_))
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &QueryExpr) -> fmt::Result {
    if needs_parens(e) {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Canonical query syntax; parsing the output yields the same expression for
/// any valid, normalized expression whose `And`/`Or` nodes have at least two
/// children.
impl fmt::Display for QueryExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryExpr::Term(t) => f.write_str(t),
            QueryExpr::Phrase(t) => write!(f, "\"{}\"", t.join(" ")),
            QueryExpr::Wildcard(p) => f.write_str(p),
            QueryExpr::Fuzzy { term, max_edits } => write!(f, "{term}~{max_edits}"),
            QueryExpr::Regex(p) => write!(f, "/{p}/"),
            QueryExpr::Range {
                low,
                high,
                inclusive: true,
            } => write!(f, "[{low} TO {high}]"),
            QueryExpr::Range {
                low,
                high,
                inclusive: false,
            } => write!(f, "{{{low} TO {high}}}"),
            QueryExpr::Near {
                left,
                right,
                window,
            } => write!(f, "{left} NEAR/{window} {right}"),
            QueryExpr::And(c) => {
                for (i, x) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" AND ")?;
                    }
                    write_child(f, x)?;
                }
                Ok(())
            }
            QueryExpr::Or(c) => {
                for (i, x) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" OR ")?;
                    }
                    write_child(f, x)?;
                }
                Ok(())
            }
            QueryExpr::Not(inner) => {
                f.write_str("NOT ")?;
                write_child(f, inner)
            }
        }
    }
}
