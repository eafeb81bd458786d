use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use super::DictionaryError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymEntry {
    pub preferred: String,
    /// `(concept_id, term)` pairs in file order.
    pub related: Vec<(String, String)>,
}

/// Concept id to preferred term plus related concepts. Relations are not
/// assumed symmetric.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymMap {
    entries: BTreeMap<String, SynonymEntry>,
}

impl SynonymMap {
    /// Reads `concept_id<TAB>preferred<TAB>rel_id:term;rel_id:term`. Blank
    /// lines and lines starting with `#` are skipped; the third column may be
    /// absent or empty.
    pub fn from_tsv<R: Read>(reader: R) -> Result<Self, DictionaryError> {
        let mut entries = BTreeMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: &str| DictionaryError::Format {
                line: lineno,
                message: message.to_string(),
            };
            let mut cols = line.split('\t');
            let id = cols.next().unwrap_or("").trim();
            let preferred = cols.next().ok_or_else(|| bad("missing preferred term"))?.trim();
            if id.is_empty() || preferred.is_empty() {
                return Err(bad("empty concept id or preferred term"));
            }
            let mut related = Vec::new();
            if let Some(rel) = cols.next() {
                for item in rel.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                    let (rid, term) = item
                        .split_once(':')
                        .ok_or_else(|| bad("related entry must be id:term"))?;
                    related.push((rid.trim().to_string(), term.trim().to_string()));
                }
            }
            if cols.next().is_some() {
                return Err(bad("too many columns"));
            }
            let entry = SynonymEntry {
                preferred: preferred.to_string(),
                related,
            };
            if entries.insert(id.to_string(), entry).is_some() {
                return Err(DictionaryError::DuplicateConcept(id.to_string()));
            }
        }
        Ok(SynonymMap { entries })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, e) in &self.entries {
            let rel: Vec<String> = e.related.iter().map(|(r, t)| format!("{r}:{t}")).collect();
            out.push_str(&format!("{id}\t{}\t{}\n", e.preferred, rel.join(";")));
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SynonymEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, concept_id: &str) -> Option<&SynonymEntry> {
        self.entries.get(concept_id)
    }

    /// Preferred term followed by related terms, first occurrence kept,
    /// casing untouched. Unknown ids give an empty list.
    pub fn expand(&self, concept_id: &str) -> Vec<String> {
        let Some(e) = self.entries.get(concept_id) else {
            return Vec::new();
        };
        let mut seen = HashSet::new();
        std::iter::once(&e.preferred)
            .chain(e.related.iter().map(|(_, t)| t))
            .filter(|t| seen.insert(t.as_str()))
            .cloned()
            .collect()
    }

    /// Concept ids whose preferred or related terms equal `term`, ignoring
    /// case.
    pub fn concepts_for(&self, term: &str) -> Vec<&str> {
        let needle = term.to_lowercase();
        self.entries
            .iter()
            .filter(|(_, e)| {
                e.preferred.to_lowercase() == needle
                    || e.related.iter().any(|(_, t)| t.to_lowercase() == needle)
            })
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Free function form of [`SynonymMap::expand`].
pub fn expand_synonyms(map: &SynonymMap, concept_id: &str) -> Vec<String> {
    map.expand(concept_id)
}
