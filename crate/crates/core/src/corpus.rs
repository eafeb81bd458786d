//! Participants, visits and verbatims, plus the symptom taxonomy.
//!
//! The store is an in-memory set of typed records with indexed foreign keys,
//! persisted as JSON-lines files in a directory:
//!
//! ```text
//! DIR/participants.jsonl
//! DIR/visits.jsonl
//! DIR/verbatims.jsonl
//! DIR/taxonomy.json      (when a taxonomy was loaded)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::UNKNOWN_LABEL;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("taxonomy row {row}: duplicate symptom {symptom:?} (domain {domain:?})")]
    DuplicateSymptom {
        row: usize,
        domain: String,
        symptom: String,
    },
    #[error("taxonomy row {row}: {reason}")]
    BadTaxonomyRow { row: usize, reason: String },
    #[error("taxonomy is empty")]
    EmptyTaxonomy,
    #[error("store has no taxonomy")]
    NoTaxonomy,
    #[error("store is inconsistent: {0}")]
    Inconsistent(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub demographics: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub participant_id: String,
    pub visit_number: u32,
    pub verbatim_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verbatim {
    pub verbatim_id: String,
    pub problem: String,
    pub consequence: String,
    pub combined: String,
}

impl Verbatim {
    pub fn new(verbatim_id: impl Into<String>, problem: &str, consequence: &str) -> Self {
        Verbatim {
            verbatim_id: verbatim_id.into(),
            problem: problem.to_string(),
            consequence: consequence.to_string(),
            combined: combine(problem, consequence),
        }
    }
}

/// Problem and consequence joined by one space after trimming each side.
/// An empty side contributes nothing (no stray delimiter).
pub fn combine(problem: &str, consequence: &str) -> String {
    let p = problem.trim();
    let c = consequence.trim();
    match (p.is_empty(), c.is_empty()) {
        (false, false) => format!("{p} {c}"),
        (false, true) => p.to_string(),
        (true, false) => c.to_string(),
        (true, true) => String::new(),
    }
}

/// One input row of the corpus JSON-lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRow {
    pub participant_id: String,
    pub visit_number: u32,
    pub problem: String,
    pub consequence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRow {
    /// 1-based line number in the source.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub participants: usize,
    pub visits: usize,
    pub verbatims: usize,
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_rows: Vec<SkippedRow>,
}

/// Verbatim ids are derived from the visit key. The suffix is all digits, so
/// the last `-v` in an id separates it unambiguously.
pub fn verbatim_id_for(participant_id: &str, visit_number: u32) -> String {
    format!("{participant_id}-v{visit_number}")
}

#[derive(Debug, Clone, Default)]
pub struct CorpusStore {
    participants: BTreeMap<String, Participant>,
    /// Insertion order is preserved so that export reproduces the input.
    visits: Vec<Visit>,
    visit_keys: BTreeMap<(String, u32), usize>,
    verbatims: BTreeMap<String, Verbatim>,
    visit_of_verbatim: BTreeMap<String, usize>,
    taxonomy: Option<Taxonomy>,
}

impl CorpusStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one row. Returns the reason when the row is rejected.
    pub fn insert_row(&mut self, row: &CorpusRow) -> Result<(), String> {
        if row.participant_id.trim().is_empty() {
            return Err("empty participant_id".into());
        }
        if row.visit_number < 1 {
            return Err("visit_number must be >= 1".into());
        }
        let combined = combine(&row.problem, &row.consequence);
        if combined.is_empty() {
            return Err("blank problem and consequence".into());
        }
        let key = (row.participant_id.clone(), row.visit_number);
        if self.visit_keys.contains_key(&key) {
            return Err(format!(
                "duplicate visit ({}, {})",
                row.participant_id, row.visit_number
            ));
        }
        let verbatim_id = verbatim_id_for(&row.participant_id, row.visit_number);
        self.participants
            .entry(row.participant_id.clone())
            .or_insert_with(|| Participant {
                participant_id: row.participant_id.clone(),
                demographics: BTreeMap::new(),
            });
        let idx = self.visits.len();
        self.visits.push(Visit {
            participant_id: row.participant_id.clone(),
            visit_number: row.visit_number,
            verbatim_id: verbatim_id.clone(),
        });
        self.visit_keys.insert(key, idx);
        self.visit_of_verbatim.insert(verbatim_id.clone(), idx);
        self.verbatims.insert(
            verbatim_id.clone(),
            Verbatim {
                verbatim_id,
                problem: row.problem.clone(),
                consequence: row.consequence.clone(),
                combined,
            },
        );
        Ok(())
    }

    /// Ingests a JSON-lines stream. Malformed, blank and duplicate rows are
    /// counted as skipped; they never abort the ingest.
    pub fn ingest_jsonl<R: BufRead>(&mut self, reader: R) -> Result<CorpusStats, CorpusError> {
        let mut stats = CorpusStats::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let outcome = serde_json::from_str::<CorpusRow>(&line)
                .map_err(|e| format!("malformed row: {e}"))
                .and_then(|row| self.insert_row(&row));
            if let Err(reason) = outcome {
                stats.skipped += 1;
                stats.skipped_rows.push(SkippedRow { line: i + 1, reason });
            }
        }
        stats.participants = self.participants.len();
        stats.visits = self.visits.len();
        stats.verbatims = self.verbatims.len();
        Ok(stats)
    }

    pub fn ingest_rows<'a, I>(&mut self, rows: I) -> CorpusStats
    where
        I: IntoIterator<Item = &'a CorpusRow>,
    {
        let mut stats = CorpusStats::default();
        for (i, row) in rows.into_iter().enumerate() {
            if let Err(reason) = self.insert_row(row) {
                stats.skipped += 1;
                stats.skipped_rows.push(SkippedRow { line: i + 1, reason });
            }
        }
        stats.participants = self.participants.len();
        stats.visits = self.visits.len();
        stats.verbatims = self.verbatims.len();
        stats
    }

    /// Rows in ingestion order, text fields exactly as ingested.
    pub fn export_rows(&self) -> Vec<CorpusRow> {
        self.visits
            .iter()
            .map(|v| {
                let verb = &self.verbatims[&v.verbatim_id];
                CorpusRow {
                    participant_id: v.participant_id.clone(),
                    visit_number: v.visit_number,
                    problem: verb.problem.clone(),
                    consequence: verb.consequence.clone(),
                }
            })
            .collect()
    }

    pub fn set_taxonomy(&mut self, taxonomy: Taxonomy) {
        self.taxonomy = Some(taxonomy);
    }

    pub fn taxonomy(&self) -> Option<&Taxonomy> {
        self.taxonomy.as_ref()
    }

    pub fn participant(&self, participant_id: &str) -> Option<&Participant> {
        self.participants.get(participant_id)
    }

    pub fn participant_mut(&mut self, participant_id: &str) -> Option<&mut Participant> {
        self.participants.get_mut(participant_id)
    }

    pub fn participants(&self) -> impl Iterator<Item = &Participant> {
        self.participants.values()
    }

    pub fn verbatim(&self, verbatim_id: &str) -> Option<&Verbatim> {
        self.verbatims.get(verbatim_id)
    }

    /// Verbatims in id order.
    pub fn verbatims(&self) -> impl Iterator<Item = &Verbatim> {
        self.verbatims.values()
    }

    pub fn visits(&self) -> &[Visit] {
        &self.visits
    }

    pub fn visit_of(&self, verbatim_id: &str) -> Option<&Visit> {
        self.visit_of_verbatim
            .get(verbatim_id)
            .map(|&i| &self.visits[i])
    }

    pub fn participant_of(&self, verbatim_id: &str) -> Option<&str> {
        self.visit_of(verbatim_id).map(|v| v.participant_id.as_str())
    }

    pub fn verbatims_of(&self, participant_id: &str) -> Vec<&Verbatim> {
        self.visit_keys
            .range((participant_id.to_string(), 0)..=(participant_id.to_string(), u32::MAX))
            .map(|(_, &i)| &self.verbatims[&self.visits[i].verbatim_id])
            .collect()
    }

    pub fn len(&self) -> usize {
        self.verbatims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verbatims.is_empty()
    }

    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir)?;
        write_jsonl(&dir.join("participants.jsonl"), self.participants.values())?;
        write_jsonl(&dir.join("visits.jsonl"), self.visits.iter())?;
        write_jsonl(&dir.join("verbatims.jsonl"), self.verbatims.values())?;
        if let Some(t) = &self.taxonomy {
            let f = File::create(dir.join("taxonomy.json"))?;
            serde_json::to_writer_pretty(BufWriter::new(f), t)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let participants: Vec<Participant> = read_jsonl(&dir.join("participants.jsonl"))?;
        let visits: Vec<Visit> = read_jsonl(&dir.join("visits.jsonl"))?;
        let verbatims: Vec<Verbatim> = read_jsonl(&dir.join("verbatims.jsonl"))?;
        let mut store = CorpusStore::new();
        for p in participants {
            store.participants.insert(p.participant_id.clone(), p);
        }
        for v in verbatims {
            store.verbatims.insert(v.verbatim_id.clone(), v);
        }
        for v in visits {
            if !store.participants.contains_key(&v.participant_id) {
                return Err(CorpusError::Inconsistent(format!(
                    "visit references unknown participant {:?}",
                    v.participant_id
                )));
            }
            if !store.verbatims.contains_key(&v.verbatim_id) {
                return Err(CorpusError::Inconsistent(format!(
                    "visit references unknown verbatim {:?}",
                    v.verbatim_id
                )));
            }
            let idx = store.visits.len();
            let key = (v.participant_id.clone(), v.visit_number);
            if store.visit_keys.insert(key, idx).is_some()
                || store
                    .visit_of_verbatim
                    .insert(v.verbatim_id.clone(), idx)
                    .is_some()
            {
                return Err(CorpusError::Inconsistent(format!(
                    "duplicate visit for verbatim {:?}",
                    v.verbatim_id
                )));
            }
            store.visits.push(v);
        }
        if store.visit_of_verbatim.len() != store.verbatims.len() {
            return Err(CorpusError::Inconsistent(
                "verbatim without a visit".into(),
            ));
        }
        let tax_path = dir.join("taxonomy.json");
        if tax_path.exists() {
            let f = File::open(tax_path)?;
            store.taxonomy = Some(serde_json::from_reader(BufReader::new(f))?);
        }
        Ok(store)
    }
}

fn write_jsonl<'a, T, I>(path: &Path, items: I) -> Result<(), CorpusError>
where
    T: Serialize + 'a,
    I: Iterator<Item = &'a T>,
{
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomDef {
    pub domain: String,
    pub symptom: String,
    pub includes_description: String,
    pub excludes_description: String,
    pub sample_phrases: Vec<String>,
}

/// Symptom taxonomy with stable label order: symptoms in insertion order,
/// then the reserved `unknown` label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    symptoms: Vec<SymptomDef>,
}

#[derive(Debug, Deserialize)]
struct TaxonomyCsvRow {
    domain: String,
    symptom: String,
    includes: String,
    excludes: String,
    sample_phrases: String,
}

impl Taxonomy {
    pub fn new(symptoms: Vec<SymptomDef>) -> Result<Self, CorpusError> {
        if symptoms.is_empty() {
            return Err(CorpusError::EmptyTaxonomy);
        }
        let mut seen = BTreeSet::new();
        for (i, s) in symptoms.iter().enumerate() {
            let row = i + 1;
            if s.domain.trim().is_empty() || s.symptom.trim().is_empty() {
                return Err(CorpusError::BadTaxonomyRow {
                    row,
                    reason: "empty domain or symptom".into(),
                });
            }
            if s.symptom == UNKNOWN_LABEL {
                return Err(CorpusError::BadTaxonomyRow {
                    row,
                    reason: format!("{UNKNOWN_LABEL:?} is reserved"),
                });
            }
            // labels are symptom names, so they must be unique across domains
            if !seen.insert(s.symptom.clone()) {
                return Err(CorpusError::DuplicateSymptom {
                    row,
                    domain: s.domain.clone(),
                    symptom: s.symptom.clone(),
                });
            }
        }
        Ok(Taxonomy { symptoms })
    }

    /// Reads the taxonomy CSV (`domain,symptom,includes,excludes,sample_phrases`,
    /// sample phrases joined by `;`).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, CorpusError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::None).from_reader(reader);
        let mut symptoms = Vec::new();
        for rec in rdr.deserialize::<TaxonomyCsvRow>() {
            let rec = rec?;
            symptoms.push(SymptomDef {
                domain: rec.domain.trim().to_string(),
                symptom: rec.symptom.trim().to_string(),
                includes_description: rec.includes,
                excludes_description: rec.excludes,
                sample_phrases: rec
                    .sample_phrases
                    .split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
            });
        }
        Taxonomy::new(symptoms)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, CorpusError> {
        Taxonomy::from_csv(File::open(path)?)
    }

    pub fn symptoms(&self) -> &[SymptomDef] {
        &self.symptoms
    }

    pub fn symptom(&self, name: &str) -> Option<&SymptomDef> {
        self.symptoms.iter().find(|s| s.symptom == name)
    }

    /// Distinct domains in first-seen order.
    pub fn domains(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.symptoms
            .iter()
            .filter(|s| seen.insert(s.domain.as_str()))
            .map(|s| s.domain.as_str())
            .collect()
    }

    /// All label categories: every symptom, then `unknown`.
    pub fn labels(&self) -> Vec<String> {
        self.symptoms
            .iter()
            .map(|s| s.symptom.clone())
            .chain(std::iter::once(UNKNOWN_LABEL.to_string()))
            .collect()
    }

    /// [`Self::labels`] paired with their domains, as a classifier expects.
    pub fn label_domains(&self) -> Vec<(String, String)> {
        self.labels()
            .into_iter()
            .map(|l| {
                let d = self.domain_of(&l).unwrap_or(UNKNOWN_LABEL).to_string();
                (l, d)
            })
            .collect()
    }

    pub fn domain_of(&self, label: &str) -> Option<&str> {
        if label == UNKNOWN_LABEL {
            return Some(UNKNOWN_LABEL);
        }
        self.symptom(label).map(|s| s.domain.as_str())
    }

    pub fn contains_label(&self, label: &str) -> bool {
        label == UNKNOWN_LABEL || self.symptom(label).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pid: &str, visit: u32, p: &str, c: &str) -> CorpusRow {
        CorpusRow {
            participant_id: pid.into(),
            visit_number: visit,
            problem: p.into(),
            consequence: c.into(),
        }
    }

    #[test]
    fn three_visits_one_participant() {
        let rows = vec![
            row("p1", 1, "tremor", "hard to write"),
            row("p1", 2, "stiffness", "slow mornings"),
            row("p1", 3, "falls", "afraid to walk"),
        ];
        let mut store = CorpusStore::new();
        let stats = store.ingest_rows(&rows);
        assert_eq!(
            (stats.participants, stats.visits, stats.verbatims, stats.skipped),
            (1, 3, 3, 0)
        );
        assert_eq!(store.verbatims_of("p1").len(), 3);
        assert_eq!(store.participant_of("p1-v2"), Some("p1"));
    }

    #[test]
    fn empty_consequence_is_kept() {
        let mut store = CorpusStore::new();
        store.ingest_rows(&[row("p1", 1, "tremor", "")]);
        assert_eq!(store.verbatim("p1-v1").unwrap().combined, "tremor");
    }

    #[test]
    fn combine_trims_each_side() {
        assert_eq!(combine("  tremor ", " hard to write  "), "tremor hard to write");
        assert_eq!(combine("", " only consequence"), "only consequence");
    }

    #[test]
    fn blank_and_duplicate_rows_are_skipped() {
        let input = [
            r#"{"participant_id":"p1","visit_number":1,"problem":"a","consequence":"b"}"#,
            r#"{"participant_id":"p1","visit_number":1,"problem":"c","consequence":"d"}"#,
            r#"{"participant_id":"p2","visit_number":1,"problem":" ","consequence":""}"#,
            r#"{"participant_id":"p3","visit_number":"x","problem":"c","consequence":"d"}"#,
            r#"{"participant_id":"p4","visit_number":0,"problem":"c","consequence":"d"}"#,
        ]
        .join("\n");
        let mut store = CorpusStore::new();
        let stats = store.ingest_jsonl(input.as_bytes()).unwrap();
        assert_eq!(stats.verbatims, 1);
        assert_eq!(stats.skipped, 4);
        assert!(stats.skipped_rows[0].reason.contains("duplicate"));
        assert_eq!(stats.skipped_rows[0].line, 2);
        assert!(stats.skipped_rows[2].reason.contains("malformed"));
    }

    #[test]
    fn export_round_trips_text_fields() {
        let rows = vec![
            row("b", 2, " spaced problem ", "café"),
            row("a", 1, "x", "  "),
            row("b", 1, "", "only consequence"),
        ];
        let mut store = CorpusStore::new();
        store.ingest_rows(&rows);
        assert_eq!(store.export_rows(), rows);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = CorpusStore::new();
        store.ingest_rows(&[row("a", 1, "x", "y"), row("a", 2, "z", "")]);
        store.set_taxonomy(single_taxonomy());
        store.save(dir.path()).unwrap();
        let loaded = CorpusStore::load(dir.path()).unwrap();
        assert_eq!(loaded.export_rows(), store.export_rows());
        assert_eq!(loaded.taxonomy(), store.taxonomy());
        assert_eq!(loaded.participant_of("a-v2"), Some("a"));
    }

    fn single_taxonomy() -> Taxonomy {
        Taxonomy::from_csv(
            "domain,symptom,includes,excludes,sample_phrases\nTremor,tremor,shaking,internal tremor,shaky hands;tremor\n"
                .as_bytes(),
        )
        .unwrap()
    }

    #[test]
    fn single_row_taxonomy() {
        let t = single_taxonomy();
        assert_eq!(t.domains(), vec!["Tremor"]);
        assert_eq!(t.symptoms().len(), 1);
        assert_eq!(t.labels(), vec!["tremor", "unknown"]);
        assert_eq!(t.symptoms()[0].sample_phrases, vec!["shaky hands", "tremor"]);
    }

    #[test]
    fn duplicate_symptom_names_row() {
        let csv = "domain,symptom,includes,excludes,sample_phrases\nA,x,,,\nB,y,,,\nA,x,,,\n";
        match Taxonomy::from_csv(csv.as_bytes()) {
            Err(CorpusError::DuplicateSymptom { row, symptom, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(symptom, "x");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
