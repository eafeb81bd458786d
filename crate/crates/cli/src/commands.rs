use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use vf_core::annotate::{
    annotate_corpus, diff_after_retune, load_dataset, load_judgments, partial_report, sample_for_validation,
    save_dataset, validation_report, verdicts_from, AnnotatedVerbatim, ValidationSample,
};
use vf_core::corpus::{combine, CorpusRow, CorpusStore, Taxonomy};
use vf_core::dataset::{
    attach_text, filter_rare_combinations, heldout_curated_split, participant_unseen_subset, split,
    split_grouped, training_rows, SplitSpec,
};
use vf_core::dictionary::{
    compile_term_table, train_word2vec, EmbeddingTable, SynonymMap, TermTable, Word2VecConfig,
};
use vf_core::index::IndexSnapshot;
use vf_core::layout;
use vf_core::metrics::{aggregate, comparison_table, read_predictions, with_unknown_fallback, MetricsReport};
use vf_core::model::{train_bundle, ModelBundle, Optimizer, TrainConfig};
use vf_core::synth::{generate, SynthConfig};
use vf_core::text::token_texts;
use vf_core::vectorize::LabelRegistry;
use vf_core::{fixtures, UNKNOWN_LABEL};

use crate::cli::*;
use crate::CliError;

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Index(a) => index(a),
        Command::Dict(DictCommand::TrainW2v(a)) => train_w2v(a),
        Command::Dict(DictCommand::Similar(a)) => similar(a),
        Command::Dict(DictCommand::Synonyms(a)) => synonyms(a),
        Command::Annotate(a) => annotate(a),
        Command::Validate(ValidateCommand::Sample(a)) => validate_sample(a),
        Command::Validate(ValidateCommand::Report(a)) => validate_report(a),
        Command::Validate(ValidateCommand::Diff(a)) => validate_diff(a),
        Command::Dataset(DatasetCommand::Filter(a)) => dataset_filter(a),
        Command::Dataset(DatasetCommand::Split(a)) => dataset_split(a),
        Command::Dataset(DatasetCommand::Heldout(a)) => dataset_heldout(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Classify(a) => classify(a),
        Command::Serve(a) => serve(a),
        Command::Synth(a) => synth(a),
    }
}

/// Prints a one-line JSON summary on stdout.
/// Writes to stdout; a reader that closed the pipe early is not an error.
fn out(text: &str) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn emit<T: Serialize>(value: &T) -> Result<(), CliError> {
    out(&format!("{}\n", serde_json::to_string(value)?))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn save_rows(path: &Path, rows: &[AnnotatedVerbatim]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_dataset(rows, path)?;
    Ok(())
}

fn taxonomy(path: Option<&Path>) -> Result<Taxonomy, CliError> {
    Ok(match path {
        Some(p) => Taxonomy::from_csv_path(p)?,
        None => fixtures::taxonomy(),
    })
}

/// The stored index, or a fresh one when `index` has not been run.
fn open_index(store_dir: &Path, store: &CorpusStore) -> Result<IndexSnapshot, CliError> {
    let path = layout::index_path(store_dir);
    Ok(if path.exists() {
        IndexSnapshot::read(&path)?
    } else {
        IndexSnapshot::build(store.verbatims())?
    })
}

/// Attaches text from the store to rows that lack it.
fn ensure_text(rows: &mut [AnnotatedVerbatim], store: Option<&Path>) -> Result<(), CliError> {
    if rows.iter().all(|r| r.text.is_some()) {
        return Ok(());
    }
    let dir = store.ok_or_else(|| CliError::new("usage", "rows carry no text; pass --store to attach it"))?;
    attach_text(rows, &CorpusStore::load(dir)?)?;
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let mut store = CorpusStore::new();
    let stats = store.ingest_jsonl(BufReader::new(File::open(&a.corpus)?))?;
    if let Some(t) = &a.taxonomy {
        store.set_taxonomy(Taxonomy::from_csv_path(t)?);
    }
    store.save(&a.store)?;
    emit(&stats)
}

fn index(a: IndexArgs) -> Result<(), CliError> {
    let store = CorpusStore::load(&a.store)?;
    let idx = IndexSnapshot::build(store.verbatims())?;
    let path = layout::index_path(&a.store);
    idx.write(&path)?;
    emit(&json!({ "documents": idx.doc_count(), "terms": idx.terms().len(), "path": path }))
}

/// One token stream per line: corpus rows give their combined text, other
/// lines are taken as they are.
fn sentences(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let text = match serde_json::from_str::<CorpusRow>(&line) {
            Ok(r) => combine(&r.problem, &r.consequence),
            Err(_) => line,
        };
        let tokens = token_texts(&text);
        if !tokens.is_empty() {
            out.push(tokens);
        }
    }
    Ok(out)
}

fn train_w2v(a: TrainW2vArgs) -> Result<(), CliError> {
    let cfg = Word2VecConfig {
        dim: a.dim,
        window: a.window,
        negative_samples: a.negative,
        epochs: a.epochs,
        seed: a.seed,
        min_count: a.min_count,
        learning_rate: a.learning_rate,
    };
    let (table, losses) = train_word2vec(&sentences(&a.corpus)?, &cfg)?;
    table.write(&a.out)?;
    emit(&json!({ "vocabulary": table.len(), "dim": table.dim(), "epoch_loss": losses, "out": a.out }))
}

fn similar(a: SimilarArgs) -> Result<(), CliError> {
    let table = EmbeddingTable::read(&a.embeddings)?;
    let neighbors: Vec<_> = table
        .most_similar(&a.term, a.k)?
        .into_iter()
        .map(|(term, cosine)| json!({ "term": term, "cosine": cosine }))
        .collect();
    emit(&json!({ "term": a.term, "neighbors": neighbors }))
}

fn synonyms(a: SynonymsArgs) -> Result<(), CliError> {
    let map = match &a.map {
        Some(p) => SynonymMap::from_tsv(BufReader::new(File::open(p)?))?,
        None => fixtures::synonyms(),
    };
    if let Some(term) = &a.term {
        return emit(&json!({ "term": term, "concepts": map.concepts_for(term) }));
    }
    let cui = a.cui.expect("clap requires --cui or --term");
    let entry = map
        .entry(&cui)
        .ok_or_else(|| CliError::new("dictionary", format!("unknown concept id {cui:?}")))?;
    let related: Vec<_> = entry
        .related
        .iter()
        .map(|(rel, term)| json!({ "relation": rel, "term": term }))
        .collect();
    emit(&json!({
        "cui": cui,
        "preferred": entry.preferred,
        "terms": map.expand(&cui),
        "related": related,
    }))
}

fn annotate(a: AnnotateArgs) -> Result<(), CliError> {
    let table = TermTable::from_path(&a.rules)?;
    let rules = compile_term_table(&table)?;
    let store = CorpusStore::load(&a.store)?;
    let idx = open_index(&a.store, &store)?;
    let rows = annotate_corpus(&rules, &idx)?;
    save_rows(&a.out, &rows)?;
    // the service annotates with the store's copy of the last table used
    let copy = layout::rules_path(&a.store);
    if fs::canonicalize(&a.rules).ok() != fs::canonicalize(&copy).ok() {
        fs::copy(&a.rules, &copy)?;
    }
    let unknown = rows.iter().filter(|r| r.is_unknown()).count();
    let matched: BTreeSet<&str> = rows
        .iter()
        .flat_map(|r| r.labels.iter().map(String::as_str))
        .filter(|l| *l != UNKNOWN_LABEL)
        .collect();
    emit(&json!({
        "verbatims": rows.len(),
        "unknown": unknown,
        "rules": rules.len(),
        "symptoms_matched": matched.len(),
        "out": a.out,
    }))
}

fn validate_sample(a: SampleArgs) -> Result<(), CliError> {
    let rows = load_dataset(&a.annotated)?;
    let sample = sample_for_validation(&rows, &a.symptom, a.fraction, a.negative_ratio, &a.negatives_from, a.seed)?;
    let out = a.out.unwrap_or_else(|| layout::sample_path(&a.store, &a.symptom));
    sample.save(&out)?;
    let negatives = sample.items.iter().filter(|it| it.is_enriched_negative).count();
    emit(&json!({
        "symptom": sample.symptom,
        "items": sample.items.len(),
        "positives": sample.items.len() - negatives,
        "negatives": negatives,
        "warnings": sample.warnings,
        "out": out,
    }))
}

fn validate_report(a: ReportArgs) -> Result<(), CliError> {
    let sample = ValidationSample::load(&layout::sample_path(&a.store, &a.symptom))?;
    let log_path = a.judgments.unwrap_or_else(|| layout::judgments_path(&a.store));
    let verdicts = verdicts_from(&load_judgments(&log_path)?);
    let report = if a.partial {
        partial_report(&sample, &verdicts)?
    } else {
        validation_report(&sample, &verdicts)?
    };
    emit(&report)
}

fn validate_diff(a: DiffArgs) -> Result<(), CliError> {
    let diff = diff_after_retune(&load_dataset(&a.before)?, &load_dataset(&a.after)?)?;
    emit(&diff)
}

fn dataset_filter(a: FilterArgs) -> Result<(), CliError> {
    let input = load_dataset(&a.input)?;
    let mut excluded: BTreeSet<String> = BTreeSet::new();
    for p in &a.exclude {
        excluded.extend(load_dataset(p)?.into_iter().map(|r| r.verbatim_id));
    }
    let kept: Vec<AnnotatedVerbatim> = input.iter().filter(|r| !excluded.contains(&r.verbatim_id)).cloned().collect();
    let common = filter_rare_combinations(&kept, a.min_freq);
    let out = training_rows(&common, a.keep_unknown);
    save_rows(&a.out, &out)?;
    emit(&json!({
        "input": input.len(),
        "excluded": input.len() - kept.len(),
        "rare_dropped": kept.len() - common.len(),
        "unusable_dropped": common.len() - out.len(),
        "output": out.len(),
        "out": a.out,
    }))
}

fn dataset_split(a: SplitArgs) -> Result<(), CliError> {
    let mut rows = load_dataset(&a.input)?;
    let store = a.store.as_deref().map(CorpusStore::load).transpose()?;
    if let Some(s) = &store {
        attach_text(&mut rows, s)?;
    }
    let spec = SplitSpec {
        train_fraction: a.train_fraction,
        test_validation_ratio: a.test_validation_ratio,
        seed: a.seed,
        grouped: a.grouped,
        ..SplitSpec::default()
    };
    let result = if a.grouped {
        let s = store.as_ref().ok_or_else(|| CliError::new("usage", "--grouped needs --store"))?;
        split_grouped(&rows, &spec, |id| s.participant_of(id).map(str::to_string))?
    } else {
        split(&rows, &spec)?
    };
    fs::create_dir_all(&a.out_dir)?;
    save_rows(&a.out_dir.join("train.jsonl"), &result.train)?;
    save_rows(&a.out_dir.join("validation.jsonl"), &result.validation)?;
    save_rows(&a.out_dir.join("test.jsonl"), &result.test)?;
    let manifest = result.manifest(&spec);
    fs::write(a.out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    let (tr, va, te) = result.sizes();
    emit(&json!({ "train": tr, "validation": va, "test": te, "out_dir": a.out_dir }))
}

fn dataset_heldout(a: HeldoutArgs) -> Result<(), CliError> {
    let curated = load_dataset(&a.curated)?;
    let categories = taxonomy(a.taxonomy.as_deref())?.labels();
    let h = heldout_curated_split(&curated, &categories, a.target, a.cap, a.seed)?;
    fs::create_dir_all(&a.out_dir)?;
    save_rows(&a.out_dir.join("heldout_test.jsonl"), &h.heldout_test)?;
    save_rows(&a.out_dir.join("baseline_train.jsonl"), &h.baseline_train)?;
    emit(&json!({
        "heldout_test": h.heldout_test.len(),
        "baseline_train": h.baseline_train.len(),
        "warnings": h.warnings,
        "out_dir": a.out_dir,
    }))
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut rows = load_dataset(&a.train)?;
    ensure_text(&mut rows, a.store.as_deref())?;
    let mut val = match &a.val {
        Some(p) => load_dataset(p)?,
        None => Vec::new(),
    };
    ensure_text(&mut val, a.store.as_deref())?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        optimizer: match a.optimizer {
            OptimizerArg::Adam => Optimizer::Adam,
            OptimizerArg::Sgd => Optimizer::Sgd,
        },
        seed: a.seed,
        threshold: a.threshold,
        max_features: a.max_features,
        ..TrainConfig::default()
    };
    let labels = taxonomy(a.taxonomy.as_deref())?.label_domains();
    let (bundle, history) = train_bundle(&rows, &val, &labels, &cfg)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    bundle.save(&a.out)?;
    if let Some(h) = &a.history {
        write_jsonl(h, &history)?;
    }
    emit(&json!({
        "train_rows": rows.len(),
        "validation_rows": val.len(),
        "vocabulary": bundle.vocabulary.len(),
        "labels": bundle.labels.len(),
        "final": history.last(),
        "out": a.out,
    }))
}

fn print_reports(reports: &[(String, MetricsReport)], format: ReportFormat) -> Result<(), CliError> {
    match format {
        ReportFormat::Table => {
            let cols: Vec<(&str, &MetricsReport)> = reports.iter().map(|(t, r)| (t.as_str(), r)).collect();
            out(&comparison_table(&cols))?;
        }
        ReportFormat::Json => {
            let map: serde_json::Map<String, serde_json::Value> = reports
                .iter()
                .map(|(t, r)| Ok((t.clone(), serde_json::to_value(r)?)))
                .collect::<Result<_, serde_json::Error>>()?;
            out(&format!("{}\n", serde_json::Value::Object(map)))?;
        }
        ReportFormat::Kv => {
            for (t, r) in reports {
                if reports.len() > 1 {
                    out(&format!("[{t}]\n"))?;
                }
                out(&r.to_kv())?;
            }
        }
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let mut reports: Vec<(String, MetricsReport)> = Vec::new();
    if let Some(p) = &a.predictions {
        let registry = LabelRegistry::new(taxonomy(a.taxonomy.as_deref())?.labels())?;
        let pairs: Vec<_> = read_predictions(BufReader::new(File::open(p)?))?
            .into_iter()
            .map(|r| (r.true_labels, r.predicted_labels))
            .collect();
        reports.push(("predictions".into(), aggregate(&registry, &pairs)?));
    } else {
        let test_path = a.test.as_ref().ok_or_else(|| CliError::new("usage", "--bundle needs --test"))?;
        let mut test = load_dataset(test_path)?;
        if a.unseen_participants {
            let train_path = a.train.as_ref().expect("clap requires --train");
            let dir = a
                .store
                .as_deref()
                .ok_or_else(|| CliError::new("usage", "--unseen-participants needs --store"))?;
            test = participant_unseen_subset(&test, &load_dataset(train_path)?, &CorpusStore::load(dir)?)?;
        }
        ensure_text(&mut test, a.store.as_deref())?;
        let texts: Vec<&str> = test.iter().map(|r| r.text.as_deref().unwrap_or_default()).collect();
        for path in &a.bundle {
            let bundle = ModelBundle::load(path)?;
            let pairs: Vec<_> = test
                .iter()
                .zip(bundle.predict_batch(&texts))
                .map(|(r, p)| (r.labels.clone(), with_unknown_fallback(p)))
                .collect();
            let title = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            reports.push((title, aggregate(&bundle.labels, &pairs)?));
        }
    }
    if let Some(dir) = &a.report_dir {
        fs::create_dir_all(dir)?;
        for (t, r) in &reports {
            fs::write(dir.join(format!("{t}.json")), r.to_json())?;
            fs::write(dir.join(format!("{t}.kv")), r.to_kv())?;
        }
    }
    print_reports(&reports, a.format)
}

fn classify(a: ClassifyArgs) -> Result<(), CliError> {
    let bundle = ModelBundle::load(&a.bundle)?;
    emit(&json!({ "predictions": bundle.classify(&a.text), "threshold": bundle.config.threshold }))
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let model = a.bundle.as_deref().map(vf_service::LoadedModel::load).transpose()?;
    let curation = vf_service::Curation::open(&a.store, a.rules.as_deref())?;
    let log = vf_service::JudgmentLog::open(&layout::judgments_path(&a.store))?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| CliError::new("usage", format!("bad address: {e}")))?;
    let state = Arc::new(vf_service::AppState::new(model, curation, log));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(vf_service::serve(addr, state))?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let tax = taxonomy(a.taxonomy.as_deref())?;
    let table = match &a.rules {
        Some(p) => TermTable::from_path(p)?,
        None => fixtures::term_table(),
    };
    let rules = compile_term_table(&table)?;
    let syn = match &a.synonyms {
        Some(p) => SynonymMap::from_tsv(BufReader::new(File::open(p)?))?,
        None => fixtures::synonyms(),
    };
    let cfg = SynthConfig {
        n: a.n,
        seed: a.seed,
        participants: a.participants,
        curated: a.curated,
        ..SynthConfig::default()
    };
    let corpus = generate(&tax, &rules, &syn, &cfg)?;
    let out: PathBuf = a.out_dir;
    fs::create_dir_all(&out)?;
    write_jsonl(&out.join("corpus.jsonl"), &corpus.corpus_rows())?;
    save_rows(&out.join("truth.jsonl"), &corpus.truth())?;
    save_rows(&out.join("curated.jsonl"), &corpus.curated_rows())?;
    let multi = corpus.rows.iter().filter(|r| r.labels.len() > 1).count();
    let unknown = corpus.rows.iter().filter(|r| r.labels.contains(UNKNOWN_LABEL)).count();
    emit(&json!({
        "rows": corpus.rows.len(),
        "curated": corpus.curated.len(),
        "multi_label": multi,
        "unknown": unknown,
        "out_dir": out,
    }))
}
