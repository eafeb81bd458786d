//! Index-backed evaluation. Multi-term leaves (wildcard, fuzzy, regex,
//! range) expand against the sorted term dictionary, bounded by a literal
//! prefix where one exists.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ast::QueryExpr;
use super::fuzzy::within_distance;
use super::regex::Regex;
use super::wildcard::{literal_prefix, wildcard_match};
use super::QueryError;
use crate::index::IndexSnapshot;

/// Sorted set of matching verbatim ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSet(pub BTreeSet<String>);

impl MatchSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &String> {
        self.0.iter()
    }
}

pub fn evaluate(expr: &QueryExpr, index: &IndexSnapshot) -> Result<MatchSet, QueryError> {
    let docs = evaluate_ordinals(expr, index)?;
    Ok(MatchSet(
        docs.into_iter().map(|d| index.doc_id(d).to_string()).collect(),
    ))
}

/// Same as [`evaluate`] but returns document ordinals.
pub fn evaluate_ordinals(
    expr: &QueryExpr,
    index: &IndexSnapshot,
) -> Result<BTreeSet<u32>, QueryError> {
    match expr {
        QueryExpr::Term(t) => Ok(term_docs(index, t)),
        QueryExpr::Phrase(terms) => Ok(spans(index, terms).into_keys().collect()),
        QueryExpr::Wildcard(p) => {
            let prefix = literal_prefix(p);
            Ok(union_terms(index, index.prefix_range(prefix), |t| {
                wildcard_match(p, t)
            }))
        }
        QueryExpr::Fuzzy { term, max_edits } => {
            let target: Vec<char> = term.chars().collect();
            let k = *max_edits as usize;
            Ok(union_terms(index, 0..index.terms().len(), |t| {
                let cand: Vec<char> = t.chars().collect();
                within_distance(&target, &cand, k)
            }))
        }
        QueryExpr::Regex(p) => {
            let re = Regex::new(p).map_err(|e| QueryError::Eval {
                leaf: expr.to_string(),
                message: e.to_string(),
            })?;
            let prefix = re.literal_prefix();
            Ok(union_terms(index, index.prefix_range(&prefix), |t| {
                re.is_match(t)
            }))
        }
        QueryExpr::Range {
            low,
            high,
            inclusive,
        } => {
            let terms = index.terms();
            let (start, end) = if *inclusive {
                (
                    terms.partition_point(|t| t.as_str() < low.as_str()),
                    terms.partition_point(|t| t.as_str() <= high.as_str()),
                )
            } else {
                (
                    terms.partition_point(|t| t.as_str() <= low.as_str()),
                    terms.partition_point(|t| t.as_str() < high.as_str()),
                )
            };
            Ok(union_terms(index, start..end.max(start), |_| true))
        }
        QueryExpr::Near {
            left,
            right,
            window,
        } => {
            let a = operand_spans(index, left)?;
            let b = operand_spans(index, right)?;
            Ok(a.iter()
                .filter_map(|(doc, sa)| {
                    let sb = b.get(doc)?;
                    spans_within(sa, sb, *window).then_some(*doc)
                })
                .collect())
        }
        QueryExpr::And(children) => {
            let mut positive: Option<BTreeSet<u32>> = None;
            let mut negative = BTreeSet::new();
            for c in children {
                match c {
                    QueryExpr::Not(inner) => {
                        negative.extend(evaluate_ordinals(inner, index)?);
                    }
                    _ => {
                        let set = evaluate_ordinals(c, index)?;
                        positive = Some(match positive {
                            None => set,
                            Some(acc) => acc.intersection(&set).copied().collect(),
                        });
                    }
                }
            }
            let pos = positive.unwrap_or_default();
            Ok(pos.difference(&negative).copied().collect())
        }
        QueryExpr::Or(children) => {
            let mut acc = BTreeSet::new();
            for c in children {
                acc.extend(evaluate_ordinals(c, index)?);
            }
            Ok(acc)
        }
        QueryExpr::Not(_) => Err(QueryError::Invalid(
            "a negation has no match set outside AND".into(),
        )),
    }
}

fn term_docs(index: &IndexSnapshot, term: &str) -> BTreeSet<u32> {
    index.postings(term).iter().map(|p| p.doc).collect()
}

fn union_terms<F>(index: &IndexSnapshot, range: std::ops::Range<usize>, mut keep: F) -> BTreeSet<u32>
where
    F: FnMut(&str) -> bool,
{
    let mut out = BTreeSet::new();
    for i in range {
        if keep(&index.terms()[i]) {
            out.extend(index.postings_at(i).iter().map(|p| p.doc));
        }
    }
    out
}

/// Inclusive token spans `(start, end)` per document.
type Spans = BTreeMap<u32, Vec<(u32, u32)>>;

fn spans(index: &IndexSnapshot, terms: &[String]) -> Spans {
    let lists: Vec<_> = terms.iter().map(|t| index.postings(t)).collect();
    let mut out = Spans::new();
    let Some((first, rest)) = lists.split_first() else {
        return out;
    };
    let n = terms.len() as u32;
    'docs: for posting in first.iter() {
        let mut others = Vec::with_capacity(rest.len());
        for list in rest {
            match list.binary_search_by_key(&posting.doc, |p| p.doc) {
                Ok(i) => others.push(&list[i].positions),
                Err(_) => continue 'docs,
            }
        }
        let starts: Vec<(u32, u32)> = posting
            .positions
            .iter()
            .filter(|&&s| {
                others
                    .iter()
                    .enumerate()
                    .all(|(k, pos)| pos.binary_search(&(s + k as u32 + 1)).is_ok())
            })
            .map(|&s| (s, s + n - 1))
            .collect();
        if !starts.is_empty() {
            out.insert(posting.doc, starts);
        }
    }
    out
}

fn operand_spans(index: &IndexSnapshot, e: &QueryExpr) -> Result<Spans, QueryError> {
    match e {
        QueryExpr::Term(t) => Ok(spans(index, std::slice::from_ref(t))),
        QueryExpr::Phrase(t) => Ok(spans(index, t)),
        other => Err(QueryError::Invalid(format!(
            "NEAR operand must be a term or phrase, got {other}"
        ))),
    }
}

/// Distance between two inclusive spans: zero when they overlap, otherwise
/// the position difference between the nearest ends.
pub(crate) fn span_gap(a: (u32, u32), b: (u32, u32)) -> u32 {
    if a.1 < b.0 {
        b.0 - a.1
    } else if b.1 < a.0 {
        a.0 - b.1
    } else {
        0
    }
}

fn spans_within(a: &[(u32, u32)], b: &[(u32, u32)], window: u32) -> bool {
    a.iter()
        .any(|&x| b.iter().any(|&y| span_gap(x, y) <= window))
}
