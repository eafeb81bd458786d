use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DictionaryError;
use crate::query::{parse, QueryExpr, DEFAULT_NEAR_WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Include,
    Exclude,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Include => "include",
            Polarity::Exclude => "exclude",
        })
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "include" => Ok(Polarity::Include),
            "exclude" => Ok(Polarity::Exclude),
            other => Err(format!("polarity must be include or exclude, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermRow {
    pub domain: String,
    pub symptom: String,
    pub serial: u32,
    pub polarity: Polarity,
    /// Raw rule strings; empty cells are dropped on load.
    pub terms: Vec<String>,
}

/// Curator-authored rule rows, one wide row per serial.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermTable {
    pub rows: Vec<TermRow>,
}

const HEADER: [&str; 4] = ["domain", "symptom", "serial", "polarity"];

impl TermTable {
    pub fn new(rows: Vec<TermRow>) -> Result<Self, DictionaryError> {
        let table = TermTable { rows };
        table.check_serials()?;
        Ok(table)
    }

    fn check_serials(&self) -> Result<(), DictionaryError> {
        let mut seen = BTreeSet::new();
        for r in &self.rows {
            if !seen.insert((r.symptom.as_str(), r.serial)) {
                return Err(DictionaryError::DuplicateSerial {
                    symptom: r.symptom.clone(),
                    serial: r.serial,
                });
            }
        }
        Ok(())
    }

    /// Reads the wide CSV layout `domain,symptom,serial,polarity,term1,...`.
    /// Rows may have any number of term columns.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, DictionaryError> {
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .has_headers(false)
            .from_reader(reader);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 1;
            let rec = rec.map_err(|e| DictionaryError::Format {
                line,
                message: e.to_string(),
            })?;
            let bad = |message: String| DictionaryError::Format { line, message };
            if i == 0 {
                let head: Vec<String> = rec.iter().take(4).map(|h| h.trim().to_lowercase()).collect();
                if head != HEADER {
                    return Err(bad(format!(
                        "header must start with {}, got {}",
                        HEADER.join(","),
                        head.join(",")
                    )));
                }
                continue;
            }
            if rec.iter().all(|c| c.trim().is_empty()) {
                continue;
            }
            if rec.len() < 4 {
                return Err(bad(format!("expected at least 4 columns, got {}", rec.len())));
            }
            let serial = rec[2]
                .trim()
                .parse::<u32>()
                .map_err(|_| bad(format!("serial {:?} is not a non-negative integer", &rec[2])))?;
            let polarity = rec[3].parse::<Polarity>().map_err(bad)?;
            rows.push(TermRow {
                domain: rec[0].trim().to_string(),
                symptom: rec[1].trim().to_string(),
                serial,
                polarity,
                terms: rec
                    .iter()
                    .skip(4)
                    .map(str::trim)
                    .filter(|c| !c.is_empty())
                    .map(str::to_string)
                    .collect(),
            });
        }
        TermTable::new(rows)
    }

    pub fn from_path(path: &Path) -> Result<Self, DictionaryError> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn to_csv(&self) -> String {
        let width = self.rows.iter().map(|r| r.terms.len()).max().unwrap_or(1).max(1);
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        let mut header: Vec<String> = HEADER.iter().map(|s| s.to_string()).collect();
        header.extend((1..=width).map(|i| format!("term{i}")));
        w.write_record(&header).expect("write to memory");
        for r in &self.rows {
            let mut rec = vec![
                r.domain.clone(),
                r.symptom.clone(),
                r.serial.to_string(),
                r.polarity.to_string(),
            ];
            rec.extend(r.terms.iter().cloned());
            w.write_record(&rec).expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
    }
}

/// One compiled cell, kept with its origin so that annotation evidence can
/// name the cell that fired.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCell {
    pub serial: u32,
    pub cell: String,
    pub expr: QueryExpr,
}

/// A symptom fires when any include cell matches and no exclude cell does.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomRule {
    pub domain: String,
    pub symptom: String,
    pub includes: Vec<RuleCell>,
    pub excludes: Vec<RuleCell>,
}

impl SymptomRule {
    pub fn include_exprs(&self) -> impl Iterator<Item = &QueryExpr> {
        self.includes.iter().map(|c| &c.expr)
    }

    pub fn exclude_exprs(&self) -> impl Iterator<Item = &QueryExpr> {
        self.excludes.iter().map(|c| &c.expr)
    }
}

enum Piece {
    Word(String),
    Raw(String),
}

/// Splits a cell into whitespace words, keeping quoted phrases, regexes and
/// ranges as single opaque pieces.
fn pieces(cell: &str) -> Vec<Piece> {
    let chars: Vec<char> = cell.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let close = match c {
            '"' => Some('"'),
            '/' => Some('/'),
            '[' => Some(']'),
            '{' => Some('}'),
            _ => None,
        };
        let start = i;
        if let Some(close) = close {
            i += 1;
            while i < chars.len() && chars[i] != close {
                if close == '/' && chars[i] == '\\' {
                    i += 1;
                }
                i += 1;
            }
            // keep a trailing fuzzy suffix or similar glued to the piece
            i = (i + 1).min(chars.len());
            while i < chars.len() && !chars[i].is_whitespace() {
                i += 1;
            }
            out.push(Piece::Raw(chars[start..i].iter().collect()));
        } else {
            while i < chars.len() && !chars[i].is_whitespace() {
                i += 1;
            }
            out.push(Piece::Word(chars[start..i].iter().collect()));
        }
    }
    out
}

/// Rewrites curator phrasing into query syntax: `X near the term Y` becomes
/// `X NEAR/10 Y`, lowercase `and`/`or` between operands become operators, and
/// a `not` between operands becomes `AND NOT`. A leading `not` stays a word.
pub fn normalize_cell(raw: &str) -> String {
    let mut ps = pieces(raw);

    let mut merged: Vec<Piece> = Vec::with_capacity(ps.len());
    let mut i = 0;
    while i < ps.len() {
        let is = |k: usize, w: &str| matches!(ps.get(k), Some(Piece::Word(x)) if x.eq_ignore_ascii_case(w));
        if i > 0 && is(i, "near") && is(i + 1, "the") && is(i + 2, "term") && i + 3 < ps.len() {
            merged.push(Piece::Word(format!("NEAR/{DEFAULT_NEAR_WINDOW}")));
            i += 3;
            continue;
        }
        merged.push(std::mem::replace(&mut ps[i], Piece::Raw(String::new())));
        i += 1;
    }

    let is_op = |p: &Piece| {
        matches!(p, Piece::Word(w) if matches!(w.as_str(), "AND" | "OR" | "NOT") || w.starts_with("NEAR"))
    };
    let last = merged.len().saturating_sub(1);
    let mut out: Vec<String> = Vec::with_capacity(merged.len());
    for (k, p) in merged.iter().enumerate() {
        match p {
            Piece::Word(w) if k > 0 && k < last => {
                let prev_is_op = is_op(&merged[k - 1]);
                match w.as_str() {
                    "and" | "or" if !prev_is_op => out.push(w.to_uppercase()),
                    "not" if prev_is_op => out.push("NOT".into()),
                    "not" => out.push("AND NOT".into()),
                    _ => out.push(w.clone()),
                }
            }
            Piece::Word(w) | Piece::Raw(w) => out.push(w.clone()),
        }
    }
    out.join(" ")
}

/// Normalizes and parses a single cell.
pub fn compile_cell(raw: &str) -> Result<QueryExpr, String> {
    parse(&normalize_cell(raw))
        .map(QueryExpr::normalized)
        .map_err(|e| e.to_string())
}

/// One rule per distinct (domain, symptom), in order of first appearance.
pub fn compile_term_table(table: &TermTable) -> Result<Vec<SymptomRule>, DictionaryError> {
    table.check_serials()?;
    let mut order: Vec<(String, String)> = Vec::new();
    let mut rules: BTreeMap<(String, String), SymptomRule> = BTreeMap::new();
    for row in &table.rows {
        if row.terms.is_empty() {
            return Err(DictionaryError::EmptyRow {
                symptom: row.symptom.clone(),
                serial: row.serial,
            });
        }
        let key = (row.domain.clone(), row.symptom.clone());
        let rule = rules.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            SymptomRule {
                domain: row.domain.clone(),
                symptom: row.symptom.clone(),
                includes: Vec::new(),
                excludes: Vec::new(),
            }
        });
        for cell in &row.terms {
            let expr = compile_cell(cell).map_err(|message| DictionaryError::Compile {
                symptom: row.symptom.clone(),
                serial: row.serial,
                cell: cell.clone(),
                message,
            })?;
            let compiled = RuleCell {
                serial: row.serial,
                cell: cell.clone(),
                expr,
            };
            match row.polarity {
                Polarity::Include => rule.includes.push(compiled),
                Polarity::Exclude => rule.excludes.push(compiled),
            }
        }
    }
    order
        .into_iter()
        .map(|k| {
            let r = rules.remove(&k).expect("key recorded on insert");
            if r.includes.is_empty() {
                Err(DictionaryError::NoIncludes(r.symptom))
            } else {
                Ok(r)
            }
        })
        .collect()
}

/// Writes compiled rules back as a term table using the canonical query
/// syntax for each cell.
pub fn rules_to_term_table(rules: &[SymptomRule]) -> TermTable {
    let mut rows = Vec::new();
    for r in rules {
        let mut grouped: Vec<TermRow> = Vec::new();
        let cells = r
            .includes
            .iter()
            .map(|c| (Polarity::Include, c))
            .chain(r.excludes.iter().map(|c| (Polarity::Exclude, c)));
        for (polarity, c) in cells {
            match grouped
                .iter_mut()
                .find(|g| g.serial == c.serial && g.polarity == polarity)
            {
                Some(g) => g.terms.push(c.expr.to_string()),
                None => grouped.push(TermRow {
                    domain: r.domain.clone(),
                    symptom: r.symptom.clone(),
                    serial: c.serial,
                    polarity,
                    terms: vec![c.expr.to_string()],
                }),
            }
        }
        rows.extend(grouped);
    }
    TermTable { rows }
}
