//! Positional inverted index over verbatim text.
//!
//! Documents are addressed internally by ordinal: the position of their
//! verbatim id in the sorted id list. Every posting list is therefore sorted
//! by verbatim id as well as by ordinal.
//!
//! The snapshot serializes to a deterministic little-endian layout (see
//! `docs/FORMATS.md`):
//!
//! ```text
//! "VFIX1"
//! u32 doc_count, then per doc: str verbatim_id, u32 token_count
//! u32 term_count, then per term (sorted):
//!     str term, u32 posting_count, then per posting:
//!         u32 doc_ordinal, u32 position_count, u32 positions...
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::binio::{Reader, Writer};
use crate::corpus::Verbatim;
use crate::text::tokenize;

pub const SNAPSHOT_MAGIC: &[u8; 5] = b"VFIX1";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate verbatim id {0:?}")]
    DuplicateDocument(String),
    #[error("{0:?} is not a single term")]
    NotSingleTerm(String),
    #[error("invalid snapshot: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub positions: Vec<u32>,
}

/// Posting list resolved to verbatim ids, as returned by [`IndexSnapshot::lookup`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostingList {
    pub term: String,
    pub postings: Vec<(String, Vec<u32>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSnapshot {
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    terms: Vec<String>,
    postings: Vec<Vec<Posting>>,
}

impl IndexSnapshot {
    /// Indexes the combined text of every verbatim.
    pub fn build<'a, I>(corpus: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = &'a Verbatim>,
    {
        Self::build_from_texts(
            corpus
                .into_iter()
                .map(|v| (v.verbatim_id.as_str(), v.combined.as_str())),
        )
    }

    pub fn build_from_texts<'a, I>(docs: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut by_id: BTreeMap<&str, &str> = BTreeMap::new();
        for (id, text) in docs {
            if by_id.insert(id, text).is_some() {
                return Err(IndexError::DuplicateDocument(id.to_string()));
            }
        }
        let mut doc_ids = Vec::with_capacity(by_id.len());
        let mut doc_lengths = Vec::with_capacity(by_id.len());
        let mut inverted: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (ord, (id, text)) in by_id.into_iter().enumerate() {
            let ord = ord as u32;
            let tokens = tokenize(text);
            doc_ids.push(id.to_string());
            doc_lengths.push(tokens.len() as u32);
            for tok in tokens {
                let list = inverted.entry(tok.text).or_default();
                match list.last_mut() {
                    Some(p) if p.doc == ord => p.positions.push(tok.position),
                    _ => list.push(Posting {
                        doc: ord,
                        positions: vec![tok.position],
                    }),
                }
            }
        }
        let (terms, postings) = inverted.into_iter().unzip();
        Ok(IndexSnapshot {
            doc_ids,
            doc_lengths,
            terms,
            postings,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_id(&self, ord: u32) -> &str {
        &self.doc_ids[ord as usize]
    }

    pub fn doc_ordinal(&self, verbatim_id: &str) -> Option<u32> {
        self.doc_ids
            .binary_search_by(|d| d.as_str().cmp(verbatim_id))
            .ok()
            .map(|i| i as u32)
    }

    pub fn doc_length(&self, ord: u32) -> u32 {
        self.doc_lengths[ord as usize]
    }

    /// Sorted term dictionary.
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.terms.binary_search_by(|t| t.as_str().cmp(term)).ok()
    }

    pub fn postings_at(&self, term_index: usize) -> &[Posting] {
        &self.postings[term_index]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        match self.term_index(term) {
            Some(i) => &self.postings[i],
            None => &[],
        }
    }

    /// Indices of dictionary terms starting with `prefix` (contiguous, since
    /// the dictionary is sorted).
    pub fn prefix_range(&self, prefix: &str) -> std::ops::Range<usize> {
        let start = self.terms.partition_point(|t| t.as_str() < prefix);
        let len = self.terms[start..]
            .iter()
            .take_while(|t| t.starts_with(prefix))
            .count();
        start..start + len
    }

    /// Exact term lookup; the input goes through the tokenizer so case is
    /// folded the same way as at index time.
    pub fn lookup(&self, term: &str) -> Result<Option<PostingList>, IndexError> {
        let toks = tokenize(term);
        if toks.len() != 1 {
            return Err(IndexError::NotSingleTerm(term.to_string()));
        }
        let t = &toks[0].text;
        Ok(self.term_index(t).map(|i| PostingList {
            term: t.clone(),
            postings: self.postings[i]
                .iter()
                .map(|p| (self.doc_ids[p.doc as usize].clone(), p.positions.clone()))
                .collect(),
        }))
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn doc_set(&self, term_index: usize) -> BTreeSet<u32> {
        self.postings[term_index].iter().map(|p| p.doc).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(SNAPSHOT_MAGIC);
        w.len_u32(self.doc_ids.len());
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            w.str(id);
            w.u32(*len);
        }
        w.len_u32(self.terms.len());
        for (term, list) in self.terms.iter().zip(&self.postings) {
            w.str(term);
            w.len_u32(list.len());
            for p in list {
                w.u32(p.doc);
                w.len_u32(p.positions.len());
                for &pos in &p.positions {
                    w.u32(pos);
                }
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader::new(bytes);
        r.expect_magic(SNAPSHOT_MAGIC)?;
        let n = r.len()?;
        let mut doc_ids = Vec::with_capacity(n);
        let mut doc_lengths = Vec::with_capacity(n);
        for _ in 0..n {
            doc_ids.push(r.str()?);
            doc_lengths.push(r.u32()?);
        }
        if doc_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IndexError::Corrupt("document ids not strictly sorted".into()));
        }
        let nt = r.len()?;
        let mut terms = Vec::with_capacity(nt);
        let mut postings = Vec::with_capacity(nt);
        for _ in 0..nt {
            let term = r.str()?;
            let np = r.len()?;
            let mut list = Vec::with_capacity(np);
            for _ in 0..np {
                let doc = r.u32()?;
                if doc as usize >= n {
                    return Err(IndexError::Corrupt(format!("posting for unknown doc {doc}")));
                }
                let npos = r.len()?;
                let mut positions = Vec::with_capacity(npos);
                for _ in 0..npos {
                    positions.push(r.u32()?);
                }
                if positions.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(IndexError::Corrupt(format!("positions not increasing for {term:?}")));
                }
                list.push(Posting { doc, positions });
            }
            if list.windows(2).any(|w: &[Posting]| w[0].doc >= w[1].doc) {
                return Err(IndexError::Corrupt(format!("postings not sorted for {term:?}")));
            }
            terms.push(term);
            postings.push(list);
        }
        if terms.windows(2).any(|w: &[String]| w[0] >= w[1]) {
            return Err(IndexError::Corrupt("term dictionary not sorted".into()));
        }
        r.finish()?;
        Ok(IndexSnapshot {
            doc_ids,
            doc_lengths,
            terms,
            postings,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), IndexError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, IndexError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
