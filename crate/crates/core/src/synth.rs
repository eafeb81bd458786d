//! Synthetic verbatims built from term-table rules, with ground-truth labels.
//!
//! Every symptom mention is a realization of one of the symptom's include
//! cells, checked against the template rules before any noise is added.
//! Noise (synonym swaps, typos, shuffled filler) is applied afterwards, so
//! rule-based annotation recovers the truth closely but not perfectly.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotateError, AnnotatedVerbatim, Provenance, TextAnnotator};
use crate::corpus::{combine, verbatim_id_for, CorpusRow, Taxonomy};
use crate::dictionary::{SymptomRule, SynonymMap};
use crate::query::regex::Regex;
use crate::query::{wildcard_match, QueryExpr};
use crate::text::token_texts;
use crate::UNKNOWN_LABEL;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no rule for symptom {0:?}")]
    MissingRule(String),
    #[error("could not realize a mention of {symptom:?} that its own rule labels correctly")]
    Unrealizable { symptom: String },
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// Defaults to a quarter of `n`.
    pub participants: Option<usize>,
    pub multi_label_rate: f64,
    pub unknown_rate: f64,
    pub synonym_swap_rate: f64,
    pub typo_rate: f64,
    pub shuffle_rate: f64,
    /// Rows given human labels, the pool for held-out and baseline sets.
    pub curated: usize,
    /// At most this many curated rows per symptom.
    pub curated_cap: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 5000,
            seed: 42,
            participants: None,
            multi_label_rate: 0.2,
            unknown_rate: 0.05,
            synonym_swap_rate: 0.15,
            typo_rate: 0.02,
            shuffle_rate: 0.3,
            curated: 745,
            curated_cap: 50,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        let rate = |x: f64| (0.0..=1.0).contains(&x);
        if self.n == 0 {
            return Err(SynthError::Config("n must be at least 1".into()));
        }
        if ![
            self.multi_label_rate,
            self.unknown_rate,
            self.synonym_swap_rate,
            self.typo_rate,
            self.shuffle_rate,
        ]
        .into_iter()
        .all(rate)
        {
            return Err(SynthError::Config("rates must lie in [0, 1]".into()));
        }
        if self.participants == Some(0) {
            return Err(SynthError::Config("participants must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthRow {
    pub participant_id: String,
    pub visit_number: u32,
    pub problem: String,
    pub consequence: String,
    pub labels: BTreeSet<String>,
}

impl SynthRow {
    pub fn verbatim_id(&self) -> String {
        verbatim_id_for(&self.participant_id, self.visit_number)
    }

    pub fn text(&self) -> String {
        combine(&self.problem, &self.consequence)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthCorpus {
    pub rows: Vec<SynthRow>,
    /// Verbatim ids of the curated rows, sorted.
    pub curated: Vec<String>,
}

impl SynthCorpus {
    pub fn corpus_rows(&self) -> Vec<CorpusRow> {
        self.rows
            .iter()
            .map(|r| CorpusRow {
                participant_id: r.participant_id.clone(),
                visit_number: r.visit_number,
                problem: r.problem.clone(),
                consequence: r.consequence.clone(),
            })
            .collect()
    }

    /// Ground truth for every row as human-labeled data, sorted by id.
    pub fn truth(&self) -> Vec<AnnotatedVerbatim> {
        let mut out: Vec<AnnotatedVerbatim> = self
            .rows
            .iter()
            .map(|r| AnnotatedVerbatim {
                verbatim_id: r.verbatim_id(),
                labels: r.labels.clone(),
                provenance: Provenance::Human,
                evidence: BTreeMap::new(),
                text: Some(r.text()),
            })
            .collect();
        out.sort_by(|a, b| a.verbatim_id.cmp(&b.verbatim_id));
        out
    }

    pub fn curated_rows(&self) -> Vec<AnnotatedVerbatim> {
        let keep: BTreeSet<&str> = self.curated.iter().map(String::as_str).collect();
        self.truth()
            .into_iter()
            .filter(|r| keep.contains(r.verbatim_id.as_str()))
            .collect()
    }
}

const LEAD_INS: &[&str] = &[
    "",
    "my main problem is",
    "i have",
    "lately i notice",
    "the worst part is",
    "i struggle with",
    "i deal with",
    "i am bothered by",
    "recently",
];

const CONNECTORS: &[&str] = &["and", "also", "plus", "and i also have"];

const FILLERS: &[&str] = &["really", "sometimes", "often", "very", "quite", "so"];

const CONSEQUENCES: &[&str] = &[
    "it affects my work",
    "it makes daily life harder",
    "my family has noticed",
    "i can't do the things i used to",
    "it limits what i can do",
    "it has changed my routine",
    "i need more help at home",
    "it is getting worse",
    "it bothers me every day",
    "it stops me enjoying my hobbies",
    "i had to cut back on activities",
    "social events are harder",
    "my spouse helps me more",
    "i feel less independent",
    "it interferes with driving",
    "i gave up gardening",
    "it takes longer to get ready",
    "i avoid going out",
    "work is harder now",
    "it is embarrassing in public",
];

const UNKNOWN_PROBLEMS: &[&str] = &[
    "everything is harder than before",
    "i just don't feel like myself",
    "getting older is hard",
    "my life has changed a lot",
    "the disease itself",
    "general decline",
    "hard to describe",
    "the uncertainty about the future",
];

/// Phrases that carry no symptom. Every one must be left unlabeled by the
/// rules used for generation.
pub fn neutral_phrases() -> impl Iterator<Item = &'static str> {
    LEAD_INS
        .iter()
        .chain(CONNECTORS)
        .chain(FILLERS)
        .chain(CONSEQUENCES)
        .chain(UNKNOWN_PROBLEMS)
        .copied()
        .filter(|s| !s.is_empty())
}

/// Next symptom in the same domain, wrapping around; for single-symptom
/// domains, the next symptom in the taxonomy.
pub fn related_symptom(taxonomy: &Taxonomy, symptom: &str) -> Option<String> {
    let all = taxonomy.symptoms();
    let pos = all.iter().position(|s| s.symptom == symptom)?;
    let domain = &all[pos].domain;
    let same: Vec<&str> = all
        .iter()
        .filter(|s| &s.domain == domain)
        .map(|s| s.symptom.as_str())
        .collect();
    if same.len() > 1 {
        let i = same.iter().position(|s| *s == symptom)?;
        Some(same[(i + 1) % same.len()].to_string())
    } else {
        Some(all[(pos + 1) % all.len()].symptom.clone())
    }
}

/// Single-word realizations for wildcards: tokens of the taxonomy sample
/// phrases and of the synonym map.
pub fn lexicon(taxonomy: &Taxonomy, synonyms: &SynonymMap) -> Vec<String> {
    let mut words = BTreeSet::new();
    for s in taxonomy.symptoms() {
        for p in &s.sample_phrases {
            words.extend(token_texts(p));
        }
    }
    for (_, e) in synonyms.iter() {
        words.extend(token_texts(&e.preferred));
        for (_, t) in &e.related {
            words.extend(token_texts(t));
        }
    }
    words.into_iter().collect()
}

/// A text that the expression matches, built from its positive leaves.
pub fn realize<R: Rng + ?Sized>(expr: &QueryExpr, lexicon: &[String], rng: &mut R) -> String {
    match expr {
        QueryExpr::Term(t) => t.clone(),
        QueryExpr::Phrase(ts) => ts.join(" "),
        QueryExpr::Wildcard(p) => {
            let hits: Vec<&String> = lexicon.iter().filter(|w| wildcard_match(p, w)).collect();
            match hits.choose(rng) {
                Some(w) => (*w).clone(),
                None => p.replace('*', "").replace('?', "e"),
            }
        }
        QueryExpr::Fuzzy { term, max_edits } => {
            if *max_edits >= 1 && rng.random_bool(0.3) {
                format!("{term}s")
            } else {
                term.clone()
            }
        }
        QueryExpr::Regex(p) => match Regex::new(p) {
            Ok(re) => re.sample(rng),
            Err(_) => p.clone(),
        },
        QueryExpr::Range { low, high, inclusive } => {
            if *inclusive {
                [low, high].choose(rng).map(|s| s.to_string()).unwrap_or_default()
            } else {
                format!("{low}a")
            }
        }
        QueryExpr::Near { left, right, window } => {
            let mut l = realize(left, lexicon, rng);
            let mut r = realize(right, lexicon, rng);
            if rng.random_bool(0.5) {
                std::mem::swap(&mut l, &mut r);
            }
            let gap = rng.random_range(0..=(*window as usize).saturating_sub(1).min(3));
            let mut parts = vec![l];
            for _ in 0..gap {
                parts.push(FILLERS.choose(rng).expect("non-empty").to_string());
            }
            parts.push(r);
            parts.join(" ")
        }
        QueryExpr::And(children) => {
            let parts: Vec<String> = children
                .iter()
                .filter(|c| !matches!(c, QueryExpr::Not(_)))
                .map(|c| realize(c, lexicon, rng))
                .collect();
            let glue = [" ", " and ", " in my "].choose(rng).expect("non-empty");
            parts.join(glue)
        }
        QueryExpr::Or(children) => children
            .choose(rng)
            .map(|c| realize(c, lexicon, rng))
            .unwrap_or_default(),
        QueryExpr::Not(_) => String::new(),
    }
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    rules: BTreeMap<&'a str, &'a SymptomRule>,
    checker: TextAnnotator<'a>,
    lexicon: Vec<String>,
    synonyms: BTreeMap<String, Vec<String>>,
}

impl Generator<'_> {
    fn mention(&self, symptom: &str, rng: &mut ChaCha8Rng) -> Result<String, SynthError> {
        let rule = self
            .rules
            .get(symptom)
            .ok_or_else(|| SynthError::MissingRule(symptom.to_string()))?;
        let want = BTreeSet::from([symptom.to_string()]);
        for _ in 0..30 {
            let cell = rule.includes.choose(rng).expect("rules have includes");
            let text = realize(&cell.expr, &self.lexicon, rng);
            if self.checker.labels(&text) == want {
                return Ok(text);
            }
        }
        Err(SynthError::Unrealizable {
            symptom: symptom.to_string(),
        })
    }

    fn perturb(&self, mention: &str, rng: &mut ChaCha8Rng) -> String {
        let mut tokens: Vec<String> = mention.split(' ').map(String::from).collect();
        if rng.random_bool(self.cfg.synonym_swap_rate) {
            let swappable: Vec<usize> = (0..tokens.len())
                .filter(|&i| self.synonyms.contains_key(&tokens[i]))
                .collect();
            if let Some(&i) = swappable.choose(rng) {
                tokens[i] = self.synonyms[&tokens[i]].choose(rng).expect("non-empty").clone();
            }
        }
        if rng.random_bool(self.cfg.typo_rate) {
            if let Some(i) = (0..tokens.len()).filter(|&i| tokens[i].chars().count() >= 5).max_by_key(|&i| tokens[i].len()) {
                let mut chars: Vec<char> = tokens[i].chars().collect();
                let at = rng.random_range(1..chars.len() - 1);
                let mut c = chars[at];
                while c == chars[at] {
                    c = rng.random_range(b'a'..=b'z') as char;
                }
                chars[at] = c;
                tokens[i] = chars.into_iter().collect();
            }
        }
        tokens.join(" ")
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Symptom frequencies fall off as 1/sqrt(rank) over a seeded ordering of the
/// taxonomy.
pub fn generate(
    taxonomy: &Taxonomy,
    rules: &[SymptomRule],
    synonyms: &SynonymMap,
    cfg: &SynthConfig,
) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rule_map: BTreeMap<&str, &SymptomRule> = rules.iter().map(|r| (r.symptom.as_str(), r)).collect();
    let mut symptoms: Vec<&str> = taxonomy.symptoms().iter().map(|s| s.symptom.as_str()).collect();
    for s in &symptoms {
        if !rule_map.contains_key(s) {
            return Err(SynthError::MissingRule(s.to_string()));
        }
    }
    symptoms.shuffle(&mut rng);
    let weights: Vec<f64> = (0..symptoms.len()).map(|r| 1.0 / ((r + 1) as f64).sqrt()).collect();
    let pick = WeightedIndex::new(&weights).map_err(|e| SynthError::Config(e.to_string()))?;

    // single-word synonym alternatives keyed by lowercase term
    let mut syn: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (_, e) in synonyms.iter() {
        let terms: Vec<String> = std::iter::once(&e.preferred)
            .chain(e.related.iter().map(|(_, t)| t))
            .map(|t| t.to_lowercase())
            .filter(|t| token_texts(t).len() == 1)
            .collect();
        for t in &terms {
            let alts: Vec<String> = terms.iter().filter(|u| *u != t).cloned().collect();
            if !alts.is_empty() {
                syn.entry(t.clone()).or_default().extend(alts);
            }
        }
    }
    for alts in syn.values_mut() {
        alts.sort();
        alts.dedup();
    }

    let g = Generator {
        cfg,
        rules: rule_map,
        checker: TextAnnotator::new(rules)?,
        lexicon: lexicon(taxonomy, synonyms),
        synonyms: syn,
    };
    let n_participants = cfg.participants.unwrap_or((cfg.n / 4).max(1));
    let mut visits = vec![0u32; n_participants];
    let mut rows = Vec::with_capacity(cfg.n);

    for _ in 0..cfg.n {
        let p = rng.random_range(0..n_participants);
        visits[p] += 1;
        let participant_id = format!("P{:05}", p + 1);
        let mut consequence = CONSEQUENCES.choose(&mut rng).expect("non-empty").to_string();
        if rng.random_bool(cfg.shuffle_rate) {
            let mut toks: Vec<&str> = consequence.split(' ').collect();
            toks.shuffle(&mut rng);
            consequence = toks.join(" ");
        }
        let lead = LEAD_INS.choose(&mut rng).expect("non-empty");

        let (problem, labels) = if rng.random_bool(cfg.unknown_rate) {
            let p = UNKNOWN_PROBLEMS.choose(&mut rng).expect("non-empty");
            (p.to_string(), BTreeSet::from([UNKNOWN_LABEL.to_string()]))
        } else {
            let first = symptoms[pick.sample(&mut rng)];
            let mut targets = vec![first.to_string()];
            if rng.random_bool(cfg.multi_label_rate) {
                if let Some(r) = related_symptom(taxonomy, first) {
                    targets.push(r);
                }
            }
            let mut chosen = None;
            'attempts: for attempt in 0..12 {
                if attempt == 8 {
                    // the pair cannot coexist under the rules
                    targets.truncate(1);
                }
                let mut mentions = Vec::new();
                for t in &targets {
                    mentions.push(g.mention(t, &mut rng)?);
                }
                let body = match mentions.as_slice() {
                    [a] => a.clone(),
                    [a, b] => format!("{a} {} {b}", CONNECTORS.choose(&mut rng).expect("non-empty")),
                    _ => unreachable!(),
                };
                let problem = if lead.is_empty() { body } else { format!("{lead} {body}") };
                let want: BTreeSet<String> = targets.iter().cloned().collect();
                if g.checker.labels(&combine(&problem, &consequence)) == want {
                    chosen = Some((mentions, want));
                    break 'attempts;
                }
            }
            let (mentions, want) = chosen.ok_or_else(|| SynthError::Unrealizable {
                symptom: targets[0].clone(),
            })?;
            let noisy: Vec<String> = mentions.iter().map(|m| g.perturb(m, &mut rng)).collect();
            let body = match noisy.as_slice() {
                [a] => a.clone(),
                [a, b] => format!("{a} {} {b}", CONNECTORS.choose(&mut rng).expect("non-empty")),
                _ => unreachable!(),
            };
            let problem = if lead.is_empty() { body } else { format!("{lead} {body}") };
            (problem, want)
        };
        rows.push(SynthRow {
            participant_id,
            visit_number: visits[p],
            problem: capitalize(&problem),
            consequence,
            labels,
        });
    }

    // curated pool: symptom rows only, at most `curated_cap` per label
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng);
    let mut per_label: BTreeMap<&str, usize> = BTreeMap::new();
    let mut curated = Vec::new();
    for i in order {
        if curated.len() >= cfg.curated {
            break;
        }
        let r = &rows[i];
        if r.labels.contains(UNKNOWN_LABEL) {
            continue;
        }
        if r.labels.iter().any(|l| per_label.get(l.as_str()).copied().unwrap_or(0) >= cfg.curated_cap) {
            continue;
        }
        for l in &r.labels {
            *per_label.entry(l.as_str()).or_default() += 1;
        }
        curated.push(r.verbatim_id());
    }
    curated.sort();
    Ok(SynthCorpus { rows, curated })
}
