//! Skip-gram embeddings trained with negative sampling.

use std::collections::HashMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DictionaryError;
use crate::binio::{Reader, Writer};

pub const EMBEDDING_MAGIC: &[u8; 6] = b"VFW2V1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Word2VecConfig {
    pub dim: usize,
    pub window: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub seed: u64,
    pub min_count: usize,
    /// Starting learning rate, decayed linearly towards zero.
    pub learning_rate: f64,
}

impl Default for Word2VecConfig {
    fn default() -> Self {
        Word2VecConfig {
            dim: 100,
            window: 5,
            negative_samples: 5,
            epochs: 5,
            seed: 42,
            min_count: 2,
            learning_rate: 0.025,
        }
    }
}

impl Word2VecConfig {
    fn check(&self) -> Result<(), DictionaryError> {
        let positive = [
            ("dim", self.dim),
            ("window", self.window),
            ("negative_samples", self.negative_samples),
            ("epochs", self.epochs),
            ("min_count", self.min_count),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(DictionaryError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(DictionaryError::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocabulary: Vec<String>,
    dim: usize,
    vectors: Vec<f32>,
    lookup: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(vocabulary: Vec<String>, dim: usize, vectors: Vec<f32>) -> Result<Self, DictionaryError> {
        if dim == 0 || vectors.len() != vocabulary.len() * dim {
            return Err(DictionaryError::Corrupt(format!(
                "{} values for {} terms of dimension {dim}",
                vectors.len(),
                vocabulary.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(DictionaryError::Corrupt("non-finite vector component".into()));
        }
        let mut lookup = HashMap::with_capacity(vocabulary.len());
        for (i, t) in vocabulary.iter().enumerate() {
            if lookup.insert(t.clone(), i).is_some() {
                return Err(DictionaryError::Corrupt(format!("duplicate term {t:?}")));
            }
        }
        Ok(EmbeddingTable {
            vocabulary,
            dim,
            vectors,
            lookup,
        })
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn vector(&self, term: &str) -> Option<&[f32]> {
        self.lookup
            .get(term)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cosine(&self, a: &str, b: &str) -> Result<f64, DictionaryError> {
        let va = self.vector(a).ok_or_else(|| DictionaryError::UnknownTerm(a.into()))?;
        let vb = self.vector(b).ok_or_else(|| DictionaryError::UnknownTerm(b.into()))?;
        Ok(cosine(va, vb))
    }

    /// Top `k` terms by cosine similarity, excluding `term` itself. Ties are
    /// ordered by term.
    pub fn most_similar(&self, term: &str, k: usize) -> Result<Vec<(String, f64)>, DictionaryError> {
        if k == 0 {
            return Err(DictionaryError::Config("k must be at least 1".into()));
        }
        let &qi = self
            .lookup
            .get(term)
            .ok_or_else(|| DictionaryError::UnknownTerm(term.into()))?;
        let q = self.row(qi);
        let mut scored: Vec<(String, f64)> = (0..self.len())
            .filter(|&i| i != qi)
            .map(|i| (self.vocabulary[i].clone(), cosine(q, self.row(i))))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(EMBEDDING_MAGIC);
        w.len_u32(self.vocabulary.len());
        w.len_u32(self.dim);
        for (i, t) in self.vocabulary.iter().enumerate() {
            w.str(t);
            for &x in self.row(i) {
                w.f32(x);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DictionaryError> {
        let corrupt = |e: std::io::Error| DictionaryError::Corrupt(e.to_string());
        let mut r = Reader::new(bytes);
        r.expect_magic(EMBEDDING_MAGIC).map_err(corrupt)?;
        let n = r.len().map_err(corrupt)?;
        let dim = r.u32().map_err(corrupt)? as usize;
        let mut vocabulary = Vec::with_capacity(n);
        let mut vectors = Vec::new();
        for _ in 0..n {
            vocabulary.push(r.str().map_err(corrupt)?);
            for _ in 0..dim {
                vectors.push(r.f32().map_err(corrupt)?);
            }
        }
        r.finish().map_err(corrupt)?;
        EmbeddingTable::new(vocabulary, dim, vectors)
    }

    pub fn write(&self, path: &Path) -> Result<(), DictionaryError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, DictionaryError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Loss and gradients for one (center, context) pair with its negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGrad {
    pub loss: f64,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `-ln σ(c·o) - Σ ln σ(-c·n)` and its gradients with respect to the
/// center (input) vector, the context (output) vector and each negative
/// (output) vector.
pub fn sgns_loss_grad(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> SgnsGrad {
    let s_pos = dot(center, context);
    let mut loss = softplus(-s_pos);
    let g_pos = sigmoid(s_pos) - 1.0;
    let mut d_center: Vec<f64> = context.iter().map(|o| g_pos * o).collect();
    let d_context: Vec<f64> = center.iter().map(|c| g_pos * c).collect();
    let mut d_neg = Vec::with_capacity(negatives.len());
    for n in negatives {
        let s = dot(center, n);
        loss += softplus(s);
        let g = sigmoid(s);
        for (dc, x) in d_center.iter_mut().zip(n.iter()) {
            *dc += g * x;
        }
        d_neg.push(center.iter().map(|c| g * c).collect());
    }
    SgnsGrad {
        loss,
        center: d_center,
        context: d_context,
        negatives: d_neg,
    }
}

/// Trains embeddings over tokenized sentences. Returns the table and the mean
/// per-pair loss of each epoch.
pub fn train_word2vec(
    sentences: &[Vec<String>],
    config: &Word2VecConfig,
) -> Result<(EmbeddingTable, Vec<f64>), DictionaryError> {
    config.check()?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in sentences {
        for t in s {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut vocab: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= config.min_count)
        .collect();
    if vocab.is_empty() {
        return Err(DictionaryError::EmptyVocabulary);
    }
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let ids: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();
    let encoded: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|t| ids.get(t.as_str()).copied()).collect())
        .collect();

    let (v, d) = (vocab.len(), config.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let half = 0.5 / d as f64;
    let mut w_in: Vec<f64> = (0..v * d).map(|_| rng.random_range(-half..half)).collect();
    let mut w_out = vec![0.0f64; v * d];
    let noise = WeightedIndex::new(vocab.iter().map(|&(_, c)| (c as f64).powf(0.75)))
        .expect("counts are positive");

    let total_tokens: usize = encoded.iter().map(Vec::len).sum();
    let total_work = (config.epochs * total_tokens).max(1) as f64;
    let mut processed = 0usize;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let (mut loss_sum, mut pairs) = (0.0f64, 0usize);
        for sent in &encoded {
            for (pos, &center) in sent.iter().enumerate() {
                let lr = config.learning_rate * (1.0 - processed as f64 / total_work).max(1e-4);
                processed += 1;
                let b = rng.random_range(1..=config.window);
                let lo = pos.saturating_sub(b);
                let hi = (pos + b).min(sent.len() - 1);
                for (cpos, &context) in sent.iter().enumerate().take(hi + 1).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    let negs: Vec<usize> = (0..config.negative_samples)
                        .map(|_| noise.sample(&mut rng))
                        .filter(|&n| n != context)
                        .collect();
                    let c_vec = w_in[center * d..(center + 1) * d].to_vec();
                    let neg_rows: Vec<&[f64]> =
                        negs.iter().map(|&n| &w_out[n * d..(n + 1) * d]).collect();
                    let g = sgns_loss_grad(&c_vec, &w_out[context * d..(context + 1) * d], &neg_rows);
                    loss_sum += g.loss;
                    pairs += 1;
                    for (w, dg) in w_out[context * d..(context + 1) * d].iter_mut().zip(&g.context) {
                        *w -= lr * dg;
                    }
                    for (&n, dn) in negs.iter().zip(&g.negatives) {
                        for (w, dg) in w_out[n * d..(n + 1) * d].iter_mut().zip(dn) {
                            *w -= lr * dg;
                        }
                    }
                    for (w, dg) in w_in[center * d..(center + 1) * d].iter_mut().zip(&g.center) {
                        *w -= lr * dg;
                    }
                }
            }
        }
        let mean = if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 };
        log::info!("word2vec epoch {} loss {mean:.6}", epoch + 1);
        history.push(mean);
    }

    let vocabulary = vocab.into_iter().map(|(t, _)| t.to_string()).collect();
    let vectors = w_in.into_iter().map(|x| x as f32).collect();
    Ok((EmbeddingTable::new(vocabulary, d, vectors)?, history))
}
