//! Linguistic resources for rule authoring: skip-gram embeddings and concept
//! synonym maps that suggest terms to curators, and term tables that compile
//! into per-symptom annotation rules.

mod synonyms;
mod term_table;
mod word2vec;

use thiserror::Error;

pub use synonyms::{expand_synonyms, SynonymEntry, SynonymMap};
pub use term_table::{
    compile_cell, compile_term_table, normalize_cell, rules_to_term_table, Polarity, RuleCell,
    SymptomRule, TermRow, TermTable,
};
pub use word2vec::{
    sgns_loss_grad, train_word2vec, EmbeddingTable, SgnsGrad, Word2VecConfig, EMBEDDING_MAGIC,
};

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate concept id {0}")]
    DuplicateConcept(String),
    #[error("symptom {symptom:?} uses serial {serial} more than once")]
    DuplicateSerial { symptom: String, serial: u32 },
    #[error("symptom {symptom:?} row {serial} has no terms")]
    EmptyRow { symptom: String, serial: u32 },
    #[error("symptom {symptom:?} row {serial} cell {cell:?}: {message}")]
    Compile {
        symptom: String,
        serial: u32,
        cell: String,
        message: String,
    },
    #[error("symptom {0:?} has exclude rows but no include rows")]
    NoIncludes(String),
    #[error("vocabulary is empty after min_count filtering")]
    EmptyVocabulary,
    #[error("term {0:?} is not in the embedding vocabulary")]
    UnknownTerm(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("corrupt embedding file: {0}")]
    Corrupt(String),
}
