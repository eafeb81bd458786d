//! Bundled reference data: the Parkinson's symptom taxonomy, its term
//! tables before and after one tuning round, a sample synonym map and the
//! four worked metric examples.

use crate::corpus::Taxonomy;
use crate::dictionary::{compile_term_table, SymptomRule, SynonymMap, TermTable};
use crate::metrics::ConfusionCounts;

pub const TAXONOMY_CSV: &str = include_str!("../../../data/pd_taxonomy.csv");
pub const RULES_CSV: &str = include_str!("../../../data/pd_rules.csv");
pub const INITIAL_RULES_CSV: &str = include_str!("../../../data/pd_rules_initial.csv");
pub const SYNONYMS_TSV: &str = include_str!("../../../data/synonyms.tsv");
pub const WORKED_EXAMPLES_PREDICTIONS_JSONL: &str = include_str!("../../../data/worked_examples_predictions.jsonl");

pub fn taxonomy() -> Taxonomy {
    Taxonomy::from_csv(TAXONOMY_CSV.as_bytes()).expect("bundled taxonomy parses")
}

pub fn term_table() -> TermTable {
    TermTable::from_csv(RULES_CSV.as_bytes()).expect("bundled term table parses")
}

pub fn initial_term_table() -> TermTable {
    TermTable::from_csv(INITIAL_RULES_CSV.as_bytes()).expect("bundled term table parses")
}

pub fn rules() -> Vec<SymptomRule> {
    compile_term_table(&term_table()).expect("bundled term table compiles")
}

pub fn initial_rules() -> Vec<SymptomRule> {
    compile_term_table(&initial_term_table()).expect("bundled term table compiles")
}

pub fn synonyms() -> SynonymMap {
    SynonymMap::from_tsv(SYNONYMS_TSV.as_bytes()).expect("bundled synonym map parses")
}

/// One worked example with its published metric values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkedExample {
    pub y_true: &'static [&'static str],
    pub y_pred: &'static [&'static str],
    pub accuracy: u8,
    /// Counts as published. The first row lists FP 0 and TN 65, where set
    /// counting gives FP 1 and TN 64.
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    /// F1 as published; 0.677 is printed where 2PR/(P+R) gives 2/3.
    pub printed_f1: f64,
}

const fn counts(tp: u64, tn: u64, fp: u64, fn_: u64) -> ConfusionCounts {
    ConfusionCounts { tp, fp, fn_, tn }
}

pub const WORKED_EXAMPLES: [WorkedExample; 4] = [
    WorkedExample {
        y_true: &["balance"],
        y_pred: &["falling"],
        accuracy: 0,
        counts: counts(0, 65, 0, 1),
        precision: 0.0,
        recall: 0.0,
        printed_f1: 0.0,
    },
    WorkedExample {
        y_true: &["balance", "falling"],
        y_pred: &["balance"],
        accuracy: 1,
        counts: counts(1, 64, 0, 1),
        precision: 1.0,
        recall: 0.5,
        printed_f1: 0.677,
    },
    WorkedExample {
        y_true: &["balance"],
        y_pred: &["balance", "falling"],
        accuracy: 0,
        counts: counts(1, 64, 1, 0),
        precision: 0.5,
        recall: 1.0,
        printed_f1: 0.677,
    },
    WorkedExample {
        y_true: &["balance", "falling"],
        y_pred: &["balance", "falling"],
        accuracy: 1,
        counts: counts(2, 64, 0, 0),
        precision: 1.0,
        recall: 1.0,
        printed_f1: 1.0,
    },
];
