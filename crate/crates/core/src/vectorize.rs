//! TF-IDF features over unigrams and bigrams, and multi-hot label vectors.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::text::token_texts;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VectorizeError {
    #[error("cannot fit a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("the corpus contains no tokens")]
    EmptyVocabulary,
    #[error("label {0:?} is not in the registry")]
    UnknownLabel(String),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid vocabulary: {0}")]
    Invalid(String),
}

/// Stored alongside fitted models so that inference uses the training-time
/// weighting.
pub const IDF_FORMULA: &str = "ln((1+N)/(1+df))+1";
pub const DEFAULT_MAX_FEATURES: usize = 20_000;

/// Unigrams followed by adjacent bigrams joined with a single space.
pub fn ngrams(tokens: &[String]) -> impl Iterator<Item = String> + '_ {
    tokens
        .iter()
        .cloned()
        .chain(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<u32>,
    n_docs: u32,
    idf: Vec<f64>,
    lookup: HashMap<String, u32>,
}

impl Vocabulary {
    /// Keeps the `max_size` n-grams with the highest document frequency,
    /// ties broken lexicographically.
    pub fn fit(docs: &[Vec<String>], max_size: usize) -> Result<Self, VectorizeError> {
        if docs.is_empty() {
            return Err(VectorizeError::EmptyCorpus);
        }
        let mut df: HashMap<String, u32> = HashMap::new();
        for d in docs {
            let uniq: HashSet<String> = ngrams(d).collect();
            for g in uniq {
                *df.entry(g).or_default() += 1;
            }
        }
        if df.is_empty() {
            return Err(VectorizeError::EmptyVocabulary);
        }
        let mut ranked: Vec<(String, u32)> = df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size);
        let (terms, df) = ranked.into_iter().unzip();
        Self::from_parts(terms, df, docs.len() as u32)
    }

    pub fn fit_texts<S: AsRef<str>>(texts: &[S], max_size: usize) -> Result<Self, VectorizeError> {
        let docs: Vec<Vec<String>> = texts.iter().map(|t| token_texts(t.as_ref())).collect();
        Self::fit(&docs, max_size)
    }

    pub fn from_parts(terms: Vec<String>, df: Vec<u32>, n_docs: u32) -> Result<Self, VectorizeError> {
        if terms.len() != df.len() {
            return Err(VectorizeError::Invalid("terms and df differ in length".into()));
        }
        if df.iter().any(|&d| d == 0 || d > n_docs) {
            return Err(VectorizeError::Invalid("document frequency out of range".into()));
        }
        let mut lookup = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if lookup.insert(t.clone(), i as u32).is_some() {
                return Err(VectorizeError::Invalid(format!("duplicate n-gram {t:?}")));
            }
        }
        let n = n_docs as f64;
        let idf = df
            .iter()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        Ok(Vocabulary {
            terms,
            df,
            n_docs,
            idf,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn document_frequencies(&self) -> &[u32] {
        &self.df
    }

    pub fn n_docs(&self) -> u32 {
        self.n_docs
    }

    pub fn index_of(&self, ngram: &str) -> Option<usize> {
        self.lookup.get(ngram).map(|&i| i as usize)
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    /// Non-zero TF-IDF entries sorted by feature index.
    pub fn tfidf_sparse(&self, tokens: &[String]) -> Vec<(u32, f64)> {
        let mut tf: BTreeMap<u32, u32> = BTreeMap::new();
        for g in ngrams(tokens) {
            if let Some(&i) = self.lookup.get(&g) {
                *tf.entry(i).or_default() += 1;
            }
        }
        tf.into_iter()
            .map(|(i, c)| (i, c as f64 * self.idf[i as usize]))
            .collect()
    }

    pub fn tfidf_vector(&self, tokens: &[String]) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        for (i, x) in self.tfidf_sparse(tokens) {
            v[i as usize] = x;
        }
        v
    }

    pub fn tfidf_text(&self, text: &str) -> Vec<(u32, f64)> {
        self.tfidf_sparse(&token_texts(text))
    }
}

/// Fixed label order used for output units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRegistry {
    labels: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl LabelRegistry {
    pub fn new(labels: Vec<String>) -> Result<Self, VectorizeError> {
        let mut lookup = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if lookup.insert(l.clone(), i).is_some() {
                return Err(VectorizeError::Invalid(format!("duplicate label {l:?}")));
            }
        }
        Ok(LabelRegistry { labels, lookup })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.lookup.get(label).copied()
    }

    pub fn encode<'a, I>(&self, labels: I) -> Result<Vec<f64>, VectorizeError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut v = vec![0.0; self.len()];
        for l in labels {
            let i = self
                .index_of(l)
                .ok_or_else(|| VectorizeError::UnknownLabel(l.to_string()))?;
            v[i] = 1.0;
        }
        Ok(v)
    }

    /// Labels scoring at least `threshold`, highest score first; equal scores
    /// keep registry order.
    pub fn decode(&self, scores: &[f64], threshold: f64) -> Result<Vec<(String, f64)>, VectorizeError> {
        if scores.len() != self.len() {
            return Err(VectorizeError::LengthMismatch {
                expected: self.len(),
                got: scores.len(),
            });
        }
        let mut out: Vec<(String, f64)> = self
            .labels
            .iter()
            .zip(scores)
            .filter(|(_, &s)| s >= threshold)
            .map(|(l, &s)| (l.clone(), s))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(out)
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<Vec<String>> {
        texts.iter().map(|t| token_texts(t)).collect()
    }

    #[test]
    fn vocabulary_enumeration_and_order() {
        let v = Vocabulary::fit(&docs(&["hand tremor", "hand shake"]), 100).unwrap();
        assert_eq!(v.terms()[0], "hand");
        let mut all: Vec<&str> = v.terms().iter().map(String::as_str).collect();
        all.sort();
        assert_eq!(all, vec!["hand", "hand shake", "hand tremor", "shake", "tremor"]);
        assert_eq!(v.document_frequencies()[v.index_of("hand").unwrap()], 2);
        assert_eq!(v.document_frequencies()[v.index_of("tremor").unwrap()], 1);
        let small = Vocabulary::fit(&docs(&["hand tremor", "hand shake"]), 2).unwrap();
        assert_eq!(small.terms(), ["hand", "hand shake"]);
        assert_eq!(Vocabulary::fit(&[], 10), Err(VectorizeError::EmptyCorpus));
    }

    #[test]
    fn linear_in_term_frequency() {
        let v = Vocabulary::fit(&docs(&["a b c", "b c d", "d d a"]), 100).unwrap();
        let once = v.tfidf_vector(&token_texts("a b"));
        let twice = v.tfidf_vector(&token_texts("a b a b"));
        // doubling the tokens doubles unigram counts but adds a "b a" bigram,
        // so compare on unigrams only
        for t in ["a", "b"] {
            let i = v.index_of(t).unwrap();
            assert_eq!(twice[i], 2.0 * once[i]);
        }
        assert!(v.tfidf_vector(&[]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn labels_round_trip() {
        let r = LabelRegistry::new(vec!["balance".into(), "falling".into(), "unknown".into()]).unwrap();
        let v = r.encode(["balance", "falling"]).unwrap();
        assert_eq!(v, vec![1.0, 1.0, 0.0]);
        let back: Vec<String> = r.decode(&v, 0.5).unwrap().into_iter().map(|x| x.0).collect();
        assert_eq!(back, vec!["balance", "falling"]);
        assert!(r.decode(&[0.4; 3], 0.5).unwrap().is_empty());
        assert_eq!(r.decode(&[0.1, 0.9, 0.2], 0.5).unwrap(), vec![("falling".into(), 0.9)]);
        assert_eq!(r.decode(&[0.1, 0.9, 0.2], 0.0).unwrap().len(), 3);
        assert!(matches!(r.encode(["nope"]), Err(VectorizeError::UnknownLabel(_))));
        assert!(r.decode(&[0.1], 0.5).is_err());
        assert!(r.encode([]).unwrap().iter().all(|&x| x == 0.0));
    }
}
