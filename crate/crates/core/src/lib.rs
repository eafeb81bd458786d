//! Machine annotation of patient symptom reports ("verbatims") and a
//! multi-label classifier trained on the annotated corpus.
//!
//! The pipeline runs in this order:
//!
//! 1. [`corpus`] ingests participants, visits and verbatims and holds the
//!    symptom taxonomy.
//! 2. [`index`] tokenizes every verbatim into a positional inverted index.
//! 3. [`query`] parses curator rules (terms, phrases, wildcards, fuzzy and
//!    regex terms, ranges, proximity, boolean combinations) and evaluates
//!    them against the index.
//! 4. [`dictionary`] compiles term tables into per-symptom rules and provides
//!    synonym suggestions (skip-gram embeddings and concept synonym maps).
//! 5. [`annotate`] applies the rules across the corpus and supports the
//!    validation loop with curators.
//! 6. [`dataset`], [`vectorize`], [`model`] and [`metrics`] turn the
//!    annotated corpus into a trained and evaluated classifier.
//!
//! [`synth`] generates a synthetic corpus from term tables so that every
//! stage can be exercised without private data.

pub mod annotate;
pub mod corpus;
pub mod dataset;
pub mod dictionary;
mod error;
pub mod fixtures;
pub mod index;
pub mod layout;
pub mod metrics;
pub mod model;
pub mod query;
pub mod synth;
pub mod text;
pub mod vectorize;

mod binio;

pub use error::{Error, Result};

/// Reserved label assigned to verbatims that match no symptom.
pub const UNKNOWN_LABEL: &str = "unknown";
