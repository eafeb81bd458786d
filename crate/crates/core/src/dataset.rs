//! Training data preparation: rare label-combination filtering, the
//! train/validation/test split, the held-out curated test set and the
//! participant-unseen subset.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotatedVerbatim, Provenance};
use crate::corpus::CorpusStore;
use crate::UNKNOWN_LABEL;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("split needs at least 10 rows, got {0}")]
    TooSmall(usize),
    #[error("dataset is empty")]
    Empty,
    #[error("row {0} is not human-curated")]
    NotCurated(String),
    #[error("verbatim {0} is not linked to a participant")]
    Unlinked(String),
    #[error("invalid split spec: {0}")]
    InvalidSpec(String),
    #[error("manifest names verbatim {0} which is not in the dataset")]
    UnknownVerbatim(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub test_validation_ratio: f64,
    pub seed: u64,
    pub rare_combo_min_frequency: usize,
    /// Keep each participant's rows on one side of the split.
    #[serde(default)]
    pub grouped: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.9,
            test_validation_ratio: 0.5,
            seed: 42,
            rare_combo_min_frequency: 2,
            grouped: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train: Vec<AnnotatedVerbatim>,
    pub validation: Vec<AnnotatedVerbatim>,
    pub test: Vec<AnnotatedVerbatim>,
}

impl SplitResult {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    pub fn manifest(&self, spec: &SplitSpec) -> SplitManifest {
        let ids = |rows: &[AnnotatedVerbatim]| rows.iter().map(|r| r.verbatim_id.clone()).collect();
        SplitManifest {
            spec: spec.clone(),
            train: ids(&self.train),
            validation: ids(&self.validation),
            test: ids(&self.test),
        }
    }
}

/// Verbatim ids per split plus the spec that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub spec: SplitSpec,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    /// Rebuilds the split from the manifest's ids.
    pub fn apply(&self, data: &[AnnotatedVerbatim]) -> Result<SplitResult, DatasetError> {
        let by_id: HashMap<&str, &AnnotatedVerbatim> =
            data.iter().map(|r| (r.verbatim_id.as_str(), r)).collect();
        let pick = |ids: &[String]| -> Result<Vec<AnnotatedVerbatim>, DatasetError> {
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|r| (*r).clone())
                        .ok_or_else(|| DatasetError::UnknownVerbatim(id.clone()))
                })
                .collect()
        };
        Ok(SplitResult {
            train: pick(&self.train)?,
            validation: pick(&self.validation)?,
            test: pick(&self.test)?,
        })
    }
}

/// Floor that tolerates products like 0.9 * 10 = 8.999999999999998.
fn floor_count(x: f64) -> usize {
    (x + 1e-9).floor() as usize
}

/// Sizes under the counting rule: train = floor(f * N), the remainder R is
/// divided with validation = floor(r * R) and test taking the rest.
pub fn split_sizes(n: usize, spec: &SplitSpec) -> Result<(usize, usize, usize), DatasetError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DatasetError::InvalidSpec(format!(
            "train_fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    if !(spec.test_validation_ratio >= 0.0 && spec.test_validation_ratio <= 1.0) {
        return Err(DatasetError::InvalidSpec(format!(
            "test_validation_ratio must be in [0, 1], got {}",
            spec.test_validation_ratio
        )));
    }
    if n < 10 {
        return Err(DatasetError::TooSmall(n));
    }
    let train = floor_count(spec.train_fraction * n as f64);
    let rest = n - train;
    let validation = floor_count(spec.test_validation_ratio * rest as f64);
    Ok((train, validation, rest - validation))
}

fn label_key(labels: &BTreeSet<String>) -> Vec<&str> {
    labels.iter().map(String::as_str).collect()
}

/// Drops rows whose exact label set occurs fewer than `min_frequency` times.
pub fn filter_rare_combinations(
    data: &[AnnotatedVerbatim],
    min_frequency: usize,
) -> Vec<AnnotatedVerbatim> {
    let mut freq: HashMap<Vec<&str>, usize> = HashMap::new();
    for r in data {
        *freq.entry(label_key(&r.labels)).or_default() += 1;
    }
    data.iter()
        .filter(|r| freq[&label_key(&r.labels)] >= min_frequency.max(1))
        .cloned()
        .collect()
}

/// Seeded row-level split obeying [`split_sizes`].
pub fn split(data: &[AnnotatedVerbatim], spec: &SplitSpec) -> Result<SplitResult, DatasetError> {
    let (n_train, n_val, _) = split_sizes(data.len(), spec)?;
    let mut rows: Vec<AnnotatedVerbatim> = data.to_vec();
    rows.sort_by(|a, b| a.verbatim_id.cmp(&b.verbatim_id));
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let test = rows.split_off(n_train + n_val);
    let validation = rows.split_off(n_train);
    Ok(SplitResult {
        train: rows,
        validation,
        test,
    })
}

/// Participant-grouped split: groups are shuffled and assigned whole, filling
/// train up to its target size, then validation, then test. Sizes follow the
/// counting rule only approximately.
pub fn split_grouped<F>(
    data: &[AnnotatedVerbatim],
    spec: &SplitSpec,
    group_of: F,
) -> Result<SplitResult, DatasetError>
where
    F: Fn(&str) -> Option<String>,
{
    let (n_train, n_val, _) = split_sizes(data.len(), spec)?;
    let mut groups: BTreeMap<String, Vec<AnnotatedVerbatim>> = BTreeMap::new();
    for r in data {
        let g = group_of(&r.verbatim_id).ok_or_else(|| DatasetError::Unlinked(r.verbatim_id.clone()))?;
        groups.entry(g).or_default().push(r.clone());
    }
    let mut order: Vec<Vec<AnnotatedVerbatim>> = groups.into_values().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut out = SplitResult::default();
    for g in order {
        if out.train.len() < n_train {
            out.train.extend(g);
        } else if out.validation.len() < n_val {
            out.validation.extend(g);
        } else {
            out.test.extend(g);
        }
    }
    Ok(out)
}

pub const DEFAULT_HELDOUT_TARGET: usize = 445;
pub const DEFAULT_HELDOUT_CAP: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldoutSplit {
    pub heldout_test: Vec<AnnotatedVerbatim>,
    pub baseline_train: Vec<AnnotatedVerbatim>,
    pub warnings: Vec<String>,
}

/// Sets aside up to `target` curated rows spread evenly over label
/// categories: categories take turns drawing one unused row from their own
/// seeded queue, each contributing at most `cap` rows. A row counts toward
/// every category it carries. Empty categories are skipped with a warning.
pub fn heldout_curated_split(
    curated: &[AnnotatedVerbatim],
    categories: &[String],
    target: usize,
    cap: usize,
    seed: u64,
) -> Result<HeldoutSplit, DatasetError> {
    if curated.is_empty() {
        return Err(DatasetError::Empty);
    }
    if let Some(r) = curated.iter().find(|r| r.provenance != Provenance::Human) {
        return Err(DatasetError::NotCurated(r.verbatim_id.clone()));
    }
    let mut rows: Vec<&AnnotatedVerbatim> = curated.iter().collect();
    rows.sort_by(|a, b| a.verbatim_id.cmp(&b.verbatim_id));

    let cats: Vec<String> = if categories.is_empty() {
        rows.iter()
            .flat_map(|r| r.labels.iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    } else {
        categories.to_vec()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warnings = Vec::new();
    let mut queues: Vec<VecDeque<usize>> = Vec::new();
    for c in &cats {
        let mut q: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].labels.contains(c)).collect();
        if q.is_empty() {
            warnings.push(format!("category {c:?} has no curated rows"));
            log::warn!("category {c:?} has no curated rows");
            continue;
        }
        q.shuffle(&mut rng);
        queues.push(q.into());
    }

    let mut taken = vec![false; rows.len()];
    let mut drawn = vec![0usize; queues.len()];
    let mut count = 0;
    'rounds: loop {
        let mut progressed = false;
        for (qi, q) in queues.iter_mut().enumerate() {
            if count >= target {
                break 'rounds;
            }
            if drawn[qi] >= cap {
                continue;
            }
            while let Some(i) = q.pop_front() {
                if !taken[i] {
                    taken[i] = true;
                    drawn[qi] += 1;
                    count += 1;
                    progressed = true;
                    break;
                }
            }
        }
        if !progressed {
            break;
        }
    }
    if count < target {
        warnings.push(format!("held out {count} rows, fewer than the target {target}"));
    }
    let (mut heldout_test, mut baseline_train) = (Vec::new(), Vec::new());
    for (i, r) in rows.into_iter().enumerate() {
        if taken[i] {
            heldout_test.push(r.clone());
        } else {
            baseline_train.push(r.clone());
        }
    }
    Ok(HeldoutSplit {
        heldout_test,
        baseline_train,
        warnings,
    })
}

/// Test rows whose participant contributed nothing to the training rows.
pub fn participant_unseen_subset(
    test: &[AnnotatedVerbatim],
    train: &[AnnotatedVerbatim],
    corpus: &CorpusStore,
) -> Result<Vec<AnnotatedVerbatim>, DatasetError> {
    let participant = |id: &str| -> Result<String, DatasetError> {
        corpus
            .participant_of(id)
            .map(str::to_string)
            .ok_or_else(|| DatasetError::Unlinked(id.to_string()))
    };
    let seen: HashSet<String> = train
        .iter()
        .map(|r| participant(&r.verbatim_id))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for r in test {
        if !seen.contains(&participant(&r.verbatim_id)?) {
            out.push(r.clone());
        }
    }
    Ok(out)
}

/// Rows usable for training: non-empty label sets, and rows labeled only
/// `unknown` dropped unless `keep_unknown` is set.
pub fn training_rows(data: &[AnnotatedVerbatim], keep_unknown: bool) -> Vec<AnnotatedVerbatim> {
    data.iter()
        .filter(|r| !r.labels.is_empty())
        .filter(|r| keep_unknown || !(r.labels.len() == 1 && r.labels.contains(UNKNOWN_LABEL)))
        .cloned()
        .collect()
}

/// Attaches each row's combined text from the store.
pub fn attach_text(data: &mut [AnnotatedVerbatim], corpus: &CorpusStore) -> Result<(), DatasetError> {
    for r in data {
        let v = corpus
            .verbatim(&r.verbatim_id)
            .ok_or_else(|| DatasetError::UnknownVerbatim(r.verbatim_id.clone()))?;
        r.text = Some(v.combined.clone());
    }
    Ok(())
}
