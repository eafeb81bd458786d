//! Per-document evaluation without an index: every leaf is tested directly
//! against the document's token list. This is the semantic reference the
//! index-backed evaluator is checked against, and it also locates the tokens
//! that made a rule fire (for evidence highlighting).

use std::collections::{BTreeMap, BTreeSet};

use super::ast::QueryExpr;
use super::eval::MatchSet;
use super::fuzzy::levenshtein;
use super::regex::Regex;
use super::QueryError;
use crate::corpus::Verbatim;
use crate::text::{token_texts, tokenize_spanned};

/// Query prepared for scanning documents one at a time.
#[derive(Debug, Clone)]
pub struct ScanMatcher<'e> {
    expr: &'e QueryExpr,
    regexes: BTreeMap<&'e str, Regex>,
}

impl<'e> ScanMatcher<'e> {
    pub fn new(expr: &'e QueryExpr) -> Result<Self, QueryError> {
        let mut regexes = BTreeMap::new();
        collect_regexes(expr, &mut regexes)?;
        Ok(ScanMatcher { expr, regexes })
    }

    pub fn matches(&self, tokens: &[String]) -> bool {
        self.eval(self.expr, tokens)
    }

    fn eval(&self, e: &QueryExpr, tokens: &[String]) -> bool {
        match e {
            QueryExpr::And(children) => {
                let mut any_positive = false;
                for c in children {
                    match c {
                        QueryExpr::Not(inner) => {
                            if self.eval(inner, tokens) {
                                return false;
                            }
                        }
                        _ => {
                            any_positive = true;
                            if !self.eval(c, tokens) {
                                return false;
                            }
                        }
                    }
                }
                any_positive
            }
            QueryExpr::Or(children) => children.iter().any(|c| self.eval(c, tokens)),
            QueryExpr::Not(_) => false,
            QueryExpr::Near { .. } => !self.near_occurrences(e, tokens).is_empty(),
            leaf => !self.leaf_occurrences(leaf, tokens).is_empty(),
        }
    }

    /// Token spans `[start, end)` where a leaf occurs.
    fn leaf_occurrences(&self, e: &QueryExpr, tokens: &[String]) -> Vec<(usize, usize)> {
        let singles = |pred: &dyn Fn(&str) -> bool| -> Vec<(usize, usize)> {
            tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| pred(t))
                .map(|(i, _)| (i, i + 1))
                .collect()
        };
        match e {
            QueryExpr::Term(t) => singles(&|x| x == t),
            QueryExpr::Phrase(terms) => {
                if terms.is_empty() || terms.len() > tokens.len() {
                    return Vec::new();
                }
                tokens
                    .windows(terms.len())
                    .enumerate()
                    .filter(|(_, w)| w.iter().zip(terms).all(|(a, b)| a == b))
                    .map(|(i, _)| (i, i + terms.len()))
                    .collect()
            }
            QueryExpr::Wildcard(p) => {
                let pc: Vec<char> = p.chars().collect();
                singles(&|x| glob(&pc, &x.chars().collect::<Vec<_>>()))
            }
            QueryExpr::Fuzzy { term, max_edits } => {
                singles(&|x| levenshtein(term, x) <= *max_edits as usize)
            }
            QueryExpr::Regex(p) => {
                let re = &self.regexes[p.as_str()];
                singles(&|x| re.is_match(x))
            }
            QueryExpr::Range {
                low,
                high,
                inclusive,
            } => singles(&|x| {
                if *inclusive {
                    low.as_str() <= x && x <= high.as_str()
                } else {
                    low.as_str() < x && x < high.as_str()
                }
            }),
            _ => Vec::new(),
        }
    }

    /// Pairs of occurrences of the two sides that fall within the window.
    fn near_occurrences(&self, e: &QueryExpr, tokens: &[String]) -> Vec<(usize, usize)> {
        let QueryExpr::Near {
            left,
            right,
            window,
        } = e
        else {
            return Vec::new();
        };
        let a = self.leaf_occurrences(left, tokens);
        let b = self.leaf_occurrences(right, tokens);
        let mut out = Vec::new();
        for &(s1, e1) in &a {
            for &(s2, e2) in &b {
                // spans are half-open; last tokens are e1-1 and e2-1
                let overlap = s1 < e2 && s2 < e1;
                let gap = if overlap {
                    0
                } else if e1 <= s2 {
                    s2 - (e1 - 1)
                } else {
                    s1 - (e2 - 1)
                };
                if gap <= *window as usize {
                    out.push((s1, e1));
                    out.push((s2, e2));
                }
            }
        }
        out
    }

    /// Token positions contributing positively to a match; empty when the
    /// document does not match.
    pub fn matched_positions(&self, tokens: &[String]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        if self.matches(tokens) {
            self.collect_positions(self.expr, tokens, &mut out);
        }
        out
    }

    fn collect_positions(&self, e: &QueryExpr, tokens: &[String], out: &mut BTreeSet<usize>) {
        let occ = match e {
            QueryExpr::And(c) | QueryExpr::Or(c) => {
                for x in c {
                    if !matches!(x, QueryExpr::Not(_)) && self.eval(x, tokens) {
                        self.collect_positions(x, tokens, out);
                    }
                }
                return;
            }
            QueryExpr::Not(_) => return,
            QueryExpr::Near { .. } => self.near_occurrences(e, tokens),
            leaf => self.leaf_occurrences(leaf, tokens),
        };
        for (s, end) in occ {
            out.extend(s..end);
        }
    }
}

fn collect_regexes<'e>(
    e: &'e QueryExpr,
    out: &mut BTreeMap<&'e str, Regex>,
) -> Result<(), QueryError> {
    match e {
        QueryExpr::Regex(p) => {
            let re = Regex::new(p).map_err(|err| QueryError::Eval {
                leaf: e.to_string(),
                message: err.to_string(),
            })?;
            out.insert(p.as_str(), re);
        }
        QueryExpr::And(c) | QueryExpr::Or(c) => {
            for x in c {
                collect_regexes(x, out)?;
            }
        }
        QueryExpr::Not(inner) => collect_regexes(inner, out)?,
        QueryExpr::Near { left, right, .. } => {
            collect_regexes(left, out)?;
            collect_regexes(right, out)?;
        }
        _ => {}
    }
    Ok(())
}

/// Recursive glob matcher, kept separate from the evaluator's iterative one.
fn glob(p: &[char], t: &[char]) -> bool {
    match p.split_first() {
        None => t.is_empty(),
        Some(('*', rest)) => (0..=t.len()).any(|i| glob(rest, &t[i..])),
        Some(('?', rest)) => !t.is_empty() && glob(rest, &t[1..]),
        Some((c, rest)) => t.first() == Some(c) && glob(rest, &t[1..]),
    }
}

/// Evaluates `expr` against every verbatim's combined text.
pub fn scan_oracle<'a, I>(expr: &QueryExpr, corpus: I) -> Result<MatchSet, QueryError>
where
    I: IntoIterator<Item = &'a Verbatim>,
{
    let m = ScanMatcher::new(expr)?;
    Ok(MatchSet(
        corpus
            .into_iter()
            .filter(|v| m.matches(&token_texts(&v.combined)))
            .map(|v| v.verbatim_id.clone())
            .collect(),
    ))
}

pub fn matches_text(expr: &QueryExpr, text: &str) -> Result<bool, QueryError> {
    Ok(ScanMatcher::new(expr)?.matches(&token_texts(text)))
}

/// Character spans `[start, end)` of the tokens that made `expr` match
/// `text`, merged where adjacent tokens are both highlighted.
pub fn highlight(expr: &QueryExpr, text: &str) -> Result<Vec<(usize, usize)>, QueryError> {
    let spanned = tokenize_spanned(text);
    let tokens: Vec<String> = spanned.iter().map(|t| t.text.clone()).collect();
    let positions = ScanMatcher::new(expr)?.matched_positions(&tokens);
    let mut out: Vec<(usize, usize)> = Vec::new();
    let mut prev: Option<usize> = None;
    for p in positions {
        let (s, e) = (spanned[p].char_start, spanned[p].char_end);
        match (prev, out.last_mut()) {
            (Some(q), Some(last)) if q + 1 == p => last.1 = e,
            _ => out.push((s, e)),
        }
        prev = Some(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse;

    fn docs(texts: &[&str]) -> Vec<Verbatim> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Verbatim::new(format!("d{i}"), t, ""))
            .collect()
    }

    #[test]
    fn empty_corpus_and_identities() {
        let q = parse("tremor").unwrap();
        assert!(scan_oracle(&q, &[]).unwrap().is_empty());
        let d = docs(&["tremor", "sleep"]);
        assert!(scan_oracle(&QueryExpr::Or(vec![]), &d).unwrap().is_empty());
        assert_eq!(
            scan_oracle(&QueryExpr::And(vec![QueryExpr::term("tremor")]), &d).unwrap(),
            scan_oracle(&q, &d).unwrap()
        );
    }

    #[test]
    fn highlight_spans() {
        let q = parse("scream AND sleep").unwrap();
        let text = "I Scream and thrash in my sleep";
        assert_eq!(highlight(&q, text).unwrap(), vec![(2, 8), (26, 31)]);
        let q = parse("\"act out\" NEAR/5 dreams").unwrap();
        assert_eq!(highlight(&q, "I act out my dreams").unwrap(), vec![(2, 9), (13, 19)]);
        assert!(highlight(&q, "nothing here").unwrap().is_empty());
    }

    #[test]
    fn glob_matches() {
        let c = |s: &str| s.chars().collect::<Vec<_>>();
        assert!(glob(&c("a*c"), &c("abbc")));
        assert!(!glob(&c("a?c"), &c("ac")));
        assert!(glob(&c("**"), &c("")));
    }
}
