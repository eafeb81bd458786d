//! Rule application over the whole corpus and the curator validation loop.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::SymptomRule;
use crate::index::IndexSnapshot;
use crate::query::{evaluate_ordinals, highlight, QueryError, ScanMatcher};
use crate::text::token_texts;
use crate::UNKNOWN_LABEL;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("items without a verdict for {symptom:?}: {ids:?}")]
    MissingVerdicts { symptom: String, ids: Vec<String> },
    #[error("datasets cover different verbatims: {0}")]
    CorpusMismatch(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Machine,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedVerbatim {
    pub verbatim_id: String,
    pub labels: BTreeSet<String>,
    pub provenance: Provenance,
    /// Symptom to the raw include cells that fired.
    #[serde(default)]
    pub evidence: BTreeMap<String, Vec<String>>,
    /// Combined text, attached when a dataset is prepared for training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl AnnotatedVerbatim {
    pub fn is_unknown(&self) -> bool {
        self.labels.len() == 1 && self.labels.contains(UNKNOWN_LABEL)
    }
}

pub fn write_dataset<W: Write>(rows: &[AnnotatedVerbatim], mut out: W) -> Result<(), AnnotateError> {
    for r in rows {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, AnnotateError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| AnnotateError::Format {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<AnnotatedVerbatim>, AnnotateError> {
    read_jsonl(reader)
}

pub fn save_dataset(rows: &[AnnotatedVerbatim], path: &Path) -> Result<(), AnnotateError> {
    let mut buf = Vec::new();
    write_dataset(rows, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<AnnotatedVerbatim>, AnnotateError> {
    read_dataset(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Machine labels for every indexed verbatim, in verbatim id order.
pub fn annotate_corpus(
    rules: &[SymptomRule],
    index: &IndexSnapshot,
) -> Result<Vec<AnnotatedVerbatim>, AnnotateError> {
    // per rule: doc ordinal -> include cells that fired (exclusions applied)
    let fired: Vec<BTreeMap<u32, Vec<String>>> = rules
        .par_iter()
        .map(|rule| -> Result<_, AnnotateError> {
            let mut excluded = BTreeSet::new();
            for e in rule.exclude_exprs() {
                excluded.extend(evaluate_ordinals(e, index)?);
            }
            let mut hits: BTreeMap<u32, Vec<String>> = BTreeMap::new();
            for cell in &rule.includes {
                for d in evaluate_ordinals(&cell.expr, index)? {
                    if !excluded.contains(&d) {
                        hits.entry(d).or_default().push(cell.cell.clone());
                    }
                }
            }
            Ok(hits)
        })
        .collect::<Result<_, _>>()?;

    let mut out = Vec::with_capacity(index.doc_count());
    for d in 0..index.doc_count() as u32 {
        let mut labels = BTreeSet::new();
        let mut evidence = BTreeMap::new();
        for (rule, hits) in rules.iter().zip(&fired) {
            if let Some(cells) = hits.get(&d) {
                labels.insert(rule.symptom.clone());
                evidence.insert(rule.symptom.clone(), cells.clone());
            }
        }
        if labels.is_empty() {
            labels.insert(UNKNOWN_LABEL.to_string());
        }
        out.push(AnnotatedVerbatim {
            verbatim_id: index.doc_id(d).to_string(),
            labels,
            provenance: Provenance::Machine,
            evidence,
            text: None,
        });
    }
    Ok(out)
}

/// Rules compiled once for labeling many texts without an index.
pub struct TextAnnotator<'r> {
    rules: Vec<(&'r str, Vec<ScanMatcher<'r>>, Vec<ScanMatcher<'r>>)>,
}

impl<'r> TextAnnotator<'r> {
    pub fn new(rules: &'r [SymptomRule]) -> Result<Self, AnnotateError> {
        let rules = rules
            .iter()
            .map(|r| -> Result<_, AnnotateError> {
                let inc = r.include_exprs().map(ScanMatcher::new).collect::<Result<_, _>>()?;
                let exc = r.exclude_exprs().map(ScanMatcher::new).collect::<Result<_, _>>()?;
                Ok((r.symptom.as_str(), inc, exc))
            })
            .collect::<Result<_, _>>()?;
        Ok(TextAnnotator { rules })
    }

    /// Matching symptoms, or just `unknown` when none match.
    pub fn labels(&self, text: &str) -> BTreeSet<String> {
        let tokens = token_texts(text);
        let mut labels: BTreeSet<String> = self
            .rules
            .iter()
            .filter(|(_, inc, exc)| {
                !exc.iter().any(|m| m.matches(&tokens)) && inc.iter().any(|m| m.matches(&tokens))
            })
            .map(|(s, _, _)| s.to_string())
            .collect();
        if labels.is_empty() {
            labels.insert(UNKNOWN_LABEL.to_string());
        }
        labels
    }
}

/// Labels one text directly, without an index.
pub fn annotate_text(rules: &[SymptomRule], text: &str) -> Result<BTreeSet<String>, AnnotateError> {
    Ok(TextAnnotator::new(rules)?.labels(text))
}

/// Character spans of `text` matched by the rule's include cells, sorted and
/// merged where they overlap.
pub fn evidence_spans(rule: &SymptomRule, text: &str) -> Result<Vec<(usize, usize)>, AnnotateError> {
    let mut spans = Vec::new();
    for e in rule.include_exprs() {
        spans.extend(highlight(e, text)?);
    }
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleItem {
    pub verbatim_id: String,
    pub machine_labels: Vec<String>,
    pub is_enriched_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSample {
    pub symptom: String,
    pub related_symptom: String,
    pub fraction: f64,
    pub negative_ratio: f64,
    pub seed: u64,
    pub items: Vec<SampleItem>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub const DEFAULT_NEGATIVE_RATIO: f64 = 0.25;

fn ceil_count(ratio: f64, n: usize) -> usize {
    // guard against products such as 0.29 * 100 = 28.999999999999996
    let x = ratio * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Draws `ceil(fraction * |matches(symptom)|)` positives and
/// `ceil(negative_ratio * positives)` near-miss negatives from verbatims
/// labeled with `related_symptom` but not `symptom`.
pub fn sample_for_validation(
    annotated: &[AnnotatedVerbatim],
    symptom: &str,
    fraction: f64,
    negative_ratio: f64,
    related_symptom: &str,
    seed: u64,
) -> Result<ValidationSample, AnnotateError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AnnotateError::InvalidArgument(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    if !(negative_ratio >= 0.0 && negative_ratio.is_finite()) {
        return Err(AnnotateError::InvalidArgument(format!(
            "negative_ratio must be non-negative, got {negative_ratio}"
        )));
    }
    let mut sorted: Vec<&AnnotatedVerbatim> = annotated.iter().collect();
    sorted.sort_by(|a, b| a.verbatim_id.cmp(&b.verbatim_id));
    let positives: Vec<&AnnotatedVerbatim> =
        sorted.iter().copied().filter(|v| v.labels.contains(symptom)).collect();
    let eligible: Vec<&AnnotatedVerbatim> = sorted
        .iter()
        .copied()
        .filter(|v| v.labels.contains(related_symptom) && !v.labels.contains(symptom))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = ceil_count(fraction, positives.len());
    let mut pos = positives.clone();
    pos.shuffle(&mut rng);
    pos.truncate(k);

    let want_neg = ceil_count(negative_ratio, k);
    let mut warnings = Vec::new();
    if want_neg > 0 && eligible.is_empty() {
        let w = format!("no verbatims labeled {related_symptom:?} without {symptom:?}; sample has no negatives");
        log::warn!("{w}");
        warnings.push(w);
    } else if want_neg > eligible.len() {
        warnings.push(format!(
            "only {} negatives available, {want_neg} requested",
            eligible.len()
        ));
    }
    let mut neg = eligible;
    neg.shuffle(&mut rng);
    neg.truncate(want_neg);

    let mut items: Vec<SampleItem> = pos
        .iter()
        .map(|v| (v, false))
        .chain(neg.iter().map(|v| (v, true)))
        .map(|(v, is_neg)| SampleItem {
            verbatim_id: v.verbatim_id.clone(),
            machine_labels: v.labels.iter().cloned().collect(),
            is_enriched_negative: is_neg,
        })
        .collect();
    items.shuffle(&mut rng);
    Ok(ValidationSample {
        symptom: symptom.to_string(),
        related_symptom: related_symptom.to_string(),
        fraction,
        negative_ratio,
        seed,
        items,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
    Unsure,
}

/// One curator decision on whether a verbatim reports a symptom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub verbatim_id: String,
    pub symptom: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub evidence_phrases: Vec<String>,
    pub curator_id: String,
    #[serde(default)]
    pub timestamp: String,
}

/// Replays an append-only log: the last record per (verbatim, symptom,
/// curator) wins. Output keeps the position of each key's last record.
pub fn replay_judgments(log: &[JudgmentRecord]) -> Vec<JudgmentRecord> {
    let mut last: BTreeMap<(&str, &str, &str), usize> = BTreeMap::new();
    for (i, r) in log.iter().enumerate() {
        last.insert((&r.verbatim_id, &r.symptom, &r.curator_id), i);
    }
    let keep: BTreeSet<usize> = last.into_values().collect();
    keep.into_iter().map(|i| log[i].clone()).collect()
}

/// Reads a judgment log, one JSON object per line. Blank lines are skipped.
pub fn read_judgments<R: BufRead>(reader: R) -> Result<Vec<JudgmentRecord>, AnnotateError> {
    read_jsonl(reader)
}

/// The log at `path`, or an empty log when the file does not exist yet.
pub fn load_judgments(path: &Path) -> Result<Vec<JudgmentRecord>, AnnotateError> {
    match std::fs::File::open(path) {
        Ok(f) => read_judgments(std::io::BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

/// Appends one record as a single line and flushes it.
pub fn append_judgment<W: Write>(record: &JudgmentRecord, mut out: W) -> Result<(), AnnotateError> {
    let mut line = serde_json::to_string(record).expect("judgment serializes");
    line.push('\n');
    out.write_all(line.as_bytes())?;
    out.flush()?;
    Ok(())
}

impl ValidationSample {
    pub fn save(&self, path: &Path) -> Result<(), AnnotateError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let json = serde_json::to_string_pretty(self).expect("sample serializes");
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AnnotateError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| AnnotateError::Format {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Verdict per (verbatim, symptom), taking the most recent record across
/// curators.
pub fn verdicts_from(log: &[JudgmentRecord]) -> BTreeMap<(String, String), Verdict> {
    replay_judgments(log)
        .into_iter()
        .map(|r| ((r.verbatim_id, r.symptom), r.verdict))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub symptom: String,
    pub items: usize,
    pub judged: usize,
    pub unsure: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Curator verdicts are truth and machine labels the prediction. `unsure`
/// items are left out of the counts.
pub fn validation_report(
    sample: &ValidationSample,
    verdicts: &BTreeMap<(String, String), Verdict>,
) -> Result<ValidationReport, AnnotateError> {
    let s = &sample.symptom;
    let missing: Vec<String> = sample
        .items
        .iter()
        .filter(|it| !verdicts.contains_key(&(it.verbatim_id.clone(), s.clone())))
        .map(|it| it.verbatim_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(AnnotateError::MissingVerdicts {
            symptom: s.clone(),
            ids: missing,
        });
    }
    report_counts(sample, verdicts)
}

/// Like [`validation_report`] but over whichever items have verdicts so far.
pub fn partial_report(
    sample: &ValidationSample,
    verdicts: &BTreeMap<(String, String), Verdict>,
) -> Result<ValidationReport, AnnotateError> {
    report_counts(sample, verdicts)
}

fn report_counts(
    sample: &ValidationSample,
    verdicts: &BTreeMap<(String, String), Verdict>,
) -> Result<ValidationReport, AnnotateError> {
    let s = &sample.symptom;
    let (mut tp, mut fp, mut fn_, mut tn, mut unsure, mut judged) = (0, 0, 0, 0, 0, 0);
    for it in &sample.items {
        let Some(v) = verdicts.get(&(it.verbatim_id.clone(), s.clone())) else {
            continue;
        };
        judged += 1;
        let predicted = it.machine_labels.iter().any(|l| l == s);
        match (v, predicted) {
            (Verdict::Unsure, _) => unsure += 1,
            (Verdict::Accept, true) => tp += 1,
            (Verdict::Reject, true) => fp += 1,
            (Verdict::Accept, false) => fn_ += 1,
            (Verdict::Reject, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ValidationReport {
        symptom: s.clone(),
        items: sample.items.len(),
        judged,
        unsure,
        tp,
        fp,
        fn_,
        tn,
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomDiff {
    pub added: Vec<String>,
    pub removed: Vec<String>,
}

/// Per-symptom verbatims gained and lost between two annotations of the same
/// corpus. Symptoms without changes are omitted.
pub fn diff_after_retune(
    before: &[AnnotatedVerbatim],
    after: &[AnnotatedVerbatim],
) -> Result<BTreeMap<String, SymptomDiff>, AnnotateError> {
    let index = |rows: &[AnnotatedVerbatim]| -> BTreeMap<String, BTreeSet<String>> {
        rows.iter()
            .map(|r| (r.verbatim_id.clone(), r.labels.clone()))
            .collect()
    };
    let (b, a) = (index(before), index(after));
    if b.len() != a.len() || b.keys().ne(a.keys()) {
        let only_b = b.keys().filter(|k| !a.contains_key(*k)).count();
        let only_a = a.keys().filter(|k| !b.contains_key(*k)).count();
        return Err(AnnotateError::CorpusMismatch(format!(
            "{only_b} verbatims only before, {only_a} only after"
        )));
    }
    let mut out: BTreeMap<String, SymptomDiff> = BTreeMap::new();
    for (id, lb) in &b {
        let la = &a[id];
        for s in la.difference(lb).filter(|s| s.as_str() != UNKNOWN_LABEL) {
            out.entry(s.clone()).or_default().added.push(id.clone());
        }
        for s in lb.difference(la).filter(|s| s.as_str() != UNKNOWN_LABEL) {
            out.entry(s.clone()).or_default().removed.push(id.clone());
        }
    }
    Ok(out)
}
