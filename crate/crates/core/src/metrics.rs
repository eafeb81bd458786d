//! Per-example confusion counts, the subset-style categorical accuracy and
//! micro-averaged corpus aggregates.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vectorize::LabelRegistry;
use crate::UNKNOWN_LABEL;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("label {0:?} is not in the registry")]
    UnknownLabel(String),
    #[error("cannot aggregate an empty example list")]
    Empty,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

/// Zero when the denominator is zero.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

impl ConfusionCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_score(self.precision(), self.recall())
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

fn check_labels(registry: &LabelRegistry, set: &BTreeSet<String>) -> Result<(), MetricsError> {
    match set.iter().find(|l| registry.index_of(l).is_none()) {
        Some(l) => Err(MetricsError::UnknownLabel(l.clone())),
        None => Ok(()),
    }
}

/// Set-theoretic counts; TN fills the rest of the registry.
pub fn example_counts(
    registry: &LabelRegistry,
    y_true: &BTreeSet<String>,
    y_pred: &BTreeSet<String>,
) -> Result<ConfusionCounts, MetricsError> {
    check_labels(registry, y_true)?;
    check_labels(registry, y_pred)?;
    let tp = y_pred.intersection(y_true).count() as u64;
    let fp = y_pred.difference(y_true).count() as u64;
    let fn_ = y_true.difference(y_pred).count() as u64;
    Ok(ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: registry.len() as u64 - tp - fp - fn_,
    })
}

/// 1 when the prediction is non-empty and contained in the true set.
pub fn example_accuracy(
    registry: &LabelRegistry,
    y_true: &BTreeSet<String>,
    y_pred: &BTreeSet<String>,
) -> Result<u8, MetricsError> {
    check_labels(registry, y_true)?;
    check_labels(registry, y_pred)?;
    Ok(u8::from(!y_pred.is_empty() && y_pred.is_subset(y_true)))
}

/// An empty prediction means the classifier found no symptom.
pub fn with_unknown_fallback(pred: BTreeSet<String>) -> BTreeSet<String> {
    if pred.is_empty() {
        BTreeSet::from([UNKNOWN_LABEL.to_string()])
    } else {
        pred
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub support: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub examples: usize,
    pub categorical_accuracy: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub totals: ConfusionCounts,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_label: Vec<LabelMetrics>,
}

/// One evaluated example: its counts and its 0/1 accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoredExample {
    pub counts: ConfusionCounts,
    pub accuracy: u8,
}

/// Micro aggregates from already computed per-example scores.
pub fn aggregate_scored(scored: &[ScoredExample]) -> Result<(f64, ConfusionCounts), MetricsError> {
    if scored.is_empty() {
        return Err(MetricsError::Empty);
    }
    let totals = scored.iter().fold(ConfusionCounts::default(), |acc, s| acc + s.counts);
    let acc = scored.iter().map(|s| s.accuracy as f64).sum::<f64>() / scored.len() as f64;
    Ok((acc, totals))
}

pub fn aggregate(
    registry: &LabelRegistry,
    examples: &[(BTreeSet<String>, BTreeSet<String>)],
) -> Result<MetricsReport, MetricsError> {
    let scored = examples
        .iter()
        .map(|(t, p)| {
            Ok(ScoredExample {
                counts: example_counts(registry, t, p)?,
                accuracy: example_accuracy(registry, t, p)?,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let (categorical_accuracy, totals) = aggregate_scored(&scored)?;

    let n = registry.len();
    let (mut tp, mut fp, mut fn_, mut support) = (vec![0u64; n], vec![0u64; n], vec![0u64; n], vec![0u64; n]);
    for (t, p) in examples {
        for l in t {
            let i = registry.index_of(l).expect("checked");
            support[i] += 1;
            if p.contains(l) {
                tp[i] += 1;
            } else {
                fn_[i] += 1;
            }
        }
        for l in p.difference(t) {
            fp[registry.index_of(l).expect("checked")] += 1;
        }
    }
    let per_label: Vec<LabelMetrics> = registry
        .labels()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let c = ConfusionCounts {
                tp: tp[i],
                fp: fp[i],
                fn_: fn_[i],
                tn: 0,
            };
            LabelMetrics {
                label: l.clone(),
                support: support[i],
                tp: tp[i],
                fp: fp[i],
                fn_: fn_[i],
                precision: c.precision(),
                recall: c.recall(),
                f1: c.f1(),
            }
        })
        .collect();
    // macro averages over labels that occur in either the truth or the predictions
    let active: Vec<&LabelMetrics> = per_label.iter().filter(|m| m.support + m.fp > 0).collect();
    let mean = |f: fn(&LabelMetrics) -> f64| {
        if active.is_empty() {
            0.0
        } else {
            active.iter().map(|m| f(m)).sum::<f64>() / active.len() as f64
        }
    };
    Ok(MetricsReport {
        examples: examples.len(),
        categorical_accuracy,
        micro_precision: totals.precision(),
        micro_recall: totals.recall(),
        micro_f1: totals.f1(),
        totals,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_label,
    })
}

impl MetricsReport {
    /// Flat `key=value` lines, per-label entries prefixed with `label.<name>.`.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "examples={}", self.examples);
        let _ = writeln!(s, "categorical_accuracy={:.6}", self.categorical_accuracy);
        let _ = writeln!(s, "micro_precision={:.6}", self.micro_precision);
        let _ = writeln!(s, "micro_recall={:.6}", self.micro_recall);
        let _ = writeln!(s, "micro_f1={:.6}", self.micro_f1);
        let _ = writeln!(s, "tp={}", self.totals.tp);
        let _ = writeln!(s, "fp={}", self.totals.fp);
        let _ = writeln!(s, "fn={}", self.totals.fn_);
        let _ = writeln!(s, "tn={}", self.totals.tn);
        let _ = writeln!(s, "macro_precision={:.6}", self.macro_precision);
        let _ = writeln!(s, "macro_recall={:.6}", self.macro_recall);
        let _ = writeln!(s, "macro_f1={:.6}", self.macro_f1);
        for m in &self.per_label {
            let key = m.label.replace(' ', "_");
            let _ = writeln!(
                s,
                "label.{key}.support={}\nlabel.{key}.precision={:.6}\nlabel.{key}.recall={:.6}\nlabel.{key}.f1={:.6}",
                m.support, m.precision, m.recall, m.f1
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Four-row summary: accuracy, F1, precision, recall.
    pub fn summary_table(&self, title: &str) -> String {
        comparison_table(&[(title, self)])
    }
}

/// Reports side by side, one column each, rows as in
/// [`MetricsReport::summary_table`].
pub fn comparison_table(columns: &[(&str, &MetricsReport)]) -> String {
    let mut s = format!("{:<22}", "metric");
    for (title, _) in columns {
        let _ = write!(s, "{title:>14}");
    }
    s.push('\n');
    let rows: [(&str, fn(&MetricsReport) -> f64); 4] = [
        ("accuracy", |r| r.categorical_accuracy),
        ("f1", |r| r.micro_f1),
        ("precision", |r| r.micro_precision),
        ("recall", |r| r.micro_recall),
    ];
    for (name, get) in rows {
        let _ = write!(s, "{name:<22}");
        for (_, r) in columns {
            let _ = write!(s, "{:>14.4}", get(r));
        }
        s.push('\n');
    }
    s
}

/// A stored prediction, the input format for offline evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(default)]
    pub verbatim_id: String,
    pub true_labels: BTreeSet<String>,
    pub predicted_labels: BTreeSet<String>,
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| MetricsError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| MetricsError::Format {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
