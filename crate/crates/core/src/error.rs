use thiserror::Error;

use crate::{
    annotate::AnnotateError, corpus::CorpusError, dataset::DatasetError,
    dictionary::DictionaryError, index::IndexError, metrics::MetricsError, model::ModelError,
    query::QueryError, synth::SynthError, vectorize::VectorizeError,
};

/// Umbrella error for callers that drive several pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used for one-line CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Corpus(_) => "corpus",
            Error::Index(_) => "index",
            Error::Query(_) => "query",
            Error::Dictionary(_) => "dictionary",
            Error::Annotate(_) => "annotate",
            Error::Dataset(_) => "dataset",
            Error::Vectorize(_) => "vectorize",
            Error::Model(_) => "model",
            Error::Metrics(_) => "metrics",
            Error::Synth(_) => "synth",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
