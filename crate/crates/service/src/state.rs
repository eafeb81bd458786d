use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};
use tokio::sync::RwLock;
use vf_core::annotate::{
    annotate_corpus, append_judgment, load_dataset, load_judgments, AnnotatedVerbatim, JudgmentRecord,
    ValidationSample,
};
use vf_core::corpus::CorpusStore;
use vf_core::dictionary::{compile_term_table, SymptomRule, TermTable};
use vf_core::index::IndexSnapshot;
use vf_core::layout;
use vf_core::model::ModelBundle;

pub struct LoadedModel {
    pub bundle: ModelBundle,
    /// First 16 hex digits of the SHA-256 of the bundle file.
    pub version: String,
}

impl LoadedModel {
    pub fn new(bundle: ModelBundle) -> Self {
        let version = bundle_version(&bundle.to_bytes());
        LoadedModel { bundle, version }
    }

    pub fn load(path: &Path) -> vf_core::Result<Self> {
        let bytes = std::fs::read(path)?;
        let bundle = ModelBundle::from_bytes(&bytes)?;
        Ok(LoadedModel {
            bundle,
            version: bundle_version(&bytes),
        })
    }
}

pub fn bundle_version(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Corpus, rules and their machine annotation, replaced as a whole on reload.
pub struct Curation {
    pub store_dir: Option<PathBuf>,
    pub corpus: CorpusStore,
    pub index: IndexSnapshot,
    pub rules: Vec<SymptomRule>,
    pub annotated: Vec<AnnotatedVerbatim>,
    pub samples: BTreeMap<String, ValidationSample>,
}

impl Curation {
    pub fn new(corpus: CorpusStore, rules: Vec<SymptomRule>) -> vf_core::Result<Self> {
        let index = IndexSnapshot::build(corpus.verbatims())?;
        let annotated = annotate_corpus(&rules, &index)?;
        Ok(Curation {
            store_dir: None,
            corpus,
            index,
            rules,
            annotated,
            samples: BTreeMap::new(),
        })
    }

    /// Opens a store directory. Rules come from `rules` when given, else from
    /// the store's copy of the last annotated term table, else none. Saved
    /// validation samples are loaded too.
    pub fn open(store: &Path, rules: Option<&Path>) -> vf_core::Result<Self> {
        let corpus = CorpusStore::load(store)?;
        let index_file = layout::index_path(store);
        let index = if index_file.exists() {
            IndexSnapshot::read(&index_file)?
        } else {
            IndexSnapshot::build(corpus.verbatims())?
        };
        let rules_file = rules.map(Path::to_path_buf).unwrap_or_else(|| layout::rules_path(store));
        let rules = if rules_file.exists() {
            compile_term_table(&TermTable::from_path(&rules_file)?)?
        } else {
            Vec::new()
        };
        let annotated_file = layout::annotated_path(store);
        let annotated = if rules.is_empty() && annotated_file.exists() {
            load_dataset(&annotated_file)?
        } else {
            annotate_corpus(&rules, &index)?
        };
        let mut samples = BTreeMap::new();
        let dir = store.join(layout::SAMPLES_DIR);
        if dir.is_dir() {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            paths.sort();
            for p in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "json")) {
                let s = ValidationSample::load(&p)?;
                samples.insert(s.symptom.clone(), s);
            }
        }
        Ok(Curation {
            store_dir: Some(store.to_path_buf()),
            corpus,
            index,
            rules,
            annotated,
            samples,
        })
    }

    pub fn insert_sample(&mut self, sample: ValidationSample) {
        self.samples.insert(sample.symptom.clone(), sample);
    }

    /// The sample for `symptom`, falling back to a file written after startup.
    pub fn sample(&self, symptom: &str) -> Option<Cow<'_, ValidationSample>> {
        if let Some(s) = self.samples.get(symptom) {
            return Some(Cow::Borrowed(s));
        }
        let path = layout::sample_path(self.store_dir.as_ref()?, symptom);
        let s = ValidationSample::load(&path).ok().filter(|s| s.symptom == symptom)?;
        Some(Cow::Owned(s))
    }

    pub fn rule(&self, symptom: &str) -> Option<&SymptomRule> {
        self.rules.iter().find(|r| r.symptom == symptom)
    }

    pub fn knows_symptom(&self, symptom: &str) -> bool {
        self.rule(symptom).is_some()
            || self.corpus.taxonomy().is_some_and(|t| t.symptom(symptom).is_some())
            || self.samples.contains_key(symptom)
    }
}

/// Append-only judgment log mirrored in memory. Appends go through one lock.
pub struct JudgmentLog {
    path: Option<PathBuf>,
    records: Vec<JudgmentRecord>,
}

impl JudgmentLog {
    pub fn in_memory() -> Self {
        JudgmentLog {
            path: None,
            records: Vec::new(),
        }
    }

    /// Replays an existing log file, or starts an empty one at `path`.
    pub fn open(path: &Path) -> vf_core::Result<Self> {
        Ok(JudgmentLog {
            records: load_judgments(path)?,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn records(&self) -> &[JudgmentRecord] {
        &self.records
    }

    pub fn append(&mut self, record: JudgmentRecord) -> vf_core::Result<()> {
        if let Some(path) = &self.path {
            let f = OpenOptions::new().create(true).append(true).open(path)?;
            append_judgment(&record, BufWriter::new(f))?;
        }
        self.records.push(record);
        Ok(())
    }
}

pub struct AppState {
    pub model: Option<LoadedModel>,
    pub curation: RwLock<Curation>,
    pub log: Mutex<JudgmentLog>,
}

impl AppState {
    pub fn new(model: Option<LoadedModel>, curation: Curation, log: JudgmentLog) -> Self {
        AppState {
            model,
            curation: RwLock::new(curation),
            log: Mutex::new(log),
        }
    }
}
