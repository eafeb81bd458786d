use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;
use vf_core::annotate::{annotate_corpus, sample_for_validation, AnnotatedVerbatim, ValidationSample};
use vf_core::corpus::CorpusStore;
use vf_core::dataset::{attach_text, training_rows};
use vf_core::fixtures;
use vf_core::index::IndexSnapshot;
use vf_core::model::{train_bundle, ModelBundle, TrainConfig};
use vf_core::synth::{self, SynthConfig};
use vf_service::{router, AppState, Curation, JudgmentLog, LoadedModel};

const SLEEPY: &str = "Excessive Daytime Sleepiness (ES)";
const FATIGUE: &str = "Physical Fatigue";

fn corpus() -> CorpusStore {
    let tax = fixtures::taxonomy();
    let s = synth::generate(
        &tax,
        &fixtures::rules(),
        &fixtures::synonyms(),
        &SynthConfig {
            n: 800,
            curated: 0,
            ..Default::default()
        },
    )
    .unwrap();
    let mut store = CorpusStore::new();
    store.ingest_rows(s.corpus_rows().iter());
    store.set_taxonomy(tax);
    store
}

fn annotated(store: &CorpusStore) -> Vec<AnnotatedVerbatim> {
    let idx = IndexSnapshot::build(store.verbatims()).unwrap();
    annotate_corpus(&fixtures::rules(), &idx).unwrap()
}

fn model() -> &'static ModelBundle {
    static MODEL: OnceLock<ModelBundle> = OnceLock::new();
    MODEL.get_or_init(|| {
        let store = corpus();
        let mut rows = training_rows(&annotated(&store), false);
        attach_text(&mut rows, &store).unwrap();
        let labels = fixtures::taxonomy().label_domains();
        let cfg = TrainConfig {
            epochs: 20,
            ..Default::default()
        };
        train_bundle(&rows, &[], &labels, &cfg).unwrap().0
    })
}

fn sleepy_sample(store: &CorpusStore, fraction: f64) -> ValidationSample {
    sample_for_validation(&annotated(store), SLEEPY, fraction, 0.25, FATIGUE, 7).unwrap()
}

fn app_with(model: Option<ModelBundle>, samples: Vec<ValidationSample>, log: JudgmentLog) -> axum::Router {
    let mut cur = Curation::new(corpus(), fixtures::rules()).unwrap();
    for s in samples {
        cur.insert_sample(s);
    }
    router(Arc::new(AppState::new(model.map(LoadedModel::new), cur, log)))
}

async fn send(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn send_json(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = send(app, method, uri, body).await;
    let v = if b.is_empty() { Value::Null } else { serde_json::from_slice(&b).unwrap() };
    (s, v)
}

fn enc(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

fn judgment(id: &str, symptom: &str, verdict: &str, curator: &str) -> Value {
    json!({
        "verbatim_id": id,
        "symptom": symptom,
        "verdict": verdict,
        "evidence_phrases": [],
        "curator_id": curator,
        "timestamp": "2024-01-01T00:00:00Z",
    })
}

#[tokio::test]
async fn health_reports_model_and_corpus() {
    let app = app_with(None, vec![], JudgmentLog::in_memory());
    let (s, v) = send_json(&app, "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["corpus_size"], 800);
    assert!(v["model_version"].is_null());

    let app = app_with(Some(model().clone()), vec![], JudgmentLog::in_memory());
    let (_, v) = send_json(&app, "GET", "/health", None).await;
    assert_eq!(v["model_version"].as_str().unwrap().len(), 16);
}

#[tokio::test]
async fn classify_ranks_and_validates() {
    let app = app_with(None, vec![], JudgmentLog::in_memory());
    let (s, _) = send_json(&app, "POST", "/classify", Some(json!({"text": "my hands shake"}))).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);

    let app = app_with(Some(model().clone()), vec![], JudgmentLog::in_memory());
    let (s, v) = send_json(&app, "POST", "/classify", None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let (s, _) = send_json(&app, "POST", "/classify", Some(json!({"text": "   "}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    // a verbatim built from the tremor rule's include cells
    let rules = fixtures::rules();
    let tremor = rules.iter().find(|r| r.symptom == "tremor").unwrap();
    let lex = synth::lexicon(&fixtures::taxonomy(), &fixtures::synonyms());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let text = format!(
        "{} {}",
        synth::realize(&tremor.includes[1].expr, &lex, &mut rng),
        "it makes everyday tasks harder"
    );
    let body = json!({ "text": text });
    let (s, first) = send(&app, "POST", "/classify", Some(body.clone())).await;
    assert_eq!(s, StatusCode::OK);
    let (_, second) = send(&app, "POST", "/classify", Some(body)).await;
    assert_eq!(first, second);

    let v: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["threshold"], 0.5);
    let preds = v["predictions"].as_array().unwrap();
    assert_eq!(preds.len(), 66);
    assert_eq!(preds[0]["label"], "tremor", "{text}");
    assert_eq!(preds[0]["domain"], "Tremor");
    let scores: Vec<f64> = preds.iter().map(|p| p["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    let keys: BTreeSet<&str> = preds[0].as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, BTreeSet::from(["label", "domain", "score"]));
}

#[tokio::test]
async fn review_queue_is_blinded_ordered_and_exhausts() {
    let store = corpus();
    let mut sample = sleepy_sample(&store, 1.0);
    assert!(sample.items.len() >= 10);
    sample.items.truncate(10);
    let n = sample.items.len();
    let app = app_with(None, vec![sample.clone()], JudgmentLog::in_memory());

    let (s, _) = send_json(&app, "GET", "/curation/next?symptom=Dreams", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let uri = format!("/curation/next?symptom={}", enc(SLEEPY));
    let mut seen = Vec::new();
    for k in 0..n {
        let (s, raw) = send(&app, "GET", &uri, None).await;
        assert_eq!(s, StatusCode::OK);
        let body = String::from_utf8(raw).unwrap();
        assert!(!body.contains("is_enriched_negative"), "{body}");
        let v: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["position"], k);
        assert_eq!(v["remaining"], n - k);
        let id = v["verbatim_id"].as_str().unwrap().to_string();
        assert_eq!(id, sample.items[k].verbatim_id);
        let text = v["text"].as_str().unwrap();
        assert_eq!(text, store.verbatim(&id).unwrap().combined);
        let chars: Vec<char> = text.chars().collect();
        for span in v["evidence_spans"].as_array().unwrap() {
            let (a, b) = (span["start"].as_u64().unwrap() as usize, span["end"].as_u64().unwrap() as usize);
            assert!(a < b && b <= chars.len());
        }
        if !sample.items[k].is_enriched_negative {
            assert!(!v["evidence_spans"].as_array().unwrap().is_empty());
        }
        let (s, ack) = send_json(&app, "POST", "/curation/judgment", Some(judgment(&id, SLEEPY, "accept", "c1"))).await;
        assert_eq!(s, StatusCode::CREATED);
        assert_eq!(ack["is_enriched_negative"], sample.items[k].is_enriched_negative);
        seen.push(id);
    }
    assert_eq!(seen.iter().collect::<BTreeSet<_>>().len(), n);
    let (s, raw) = send(&app, "GET", &uri, None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    assert!(raw.is_empty());
}

#[tokio::test]
async fn sleep_samples_are_enriched_with_fatigue_reports() {
    let store = corpus();
    let sample = sleepy_sample(&store, 0.3);
    let negatives: Vec<_> = sample.items.iter().filter(|it| it.is_enriched_negative).collect();
    assert!(!negatives.is_empty());
    for it in negatives {
        assert!(it.machine_labels.iter().any(|l| l == FATIGUE));
        assert!(!it.machine_labels.iter().any(|l| l == SLEEPY));
    }
}

/// Independent recount: verdict is truth, machine label is the prediction.
fn expected_counts(sample: &ValidationSample, verdicts: &[(&str, &str)]) -> (u64, u64, u64, u64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (id, verdict) in verdicts {
        let item = sample.items.iter().find(|it| it.verbatim_id == *id).unwrap();
        let machine = item.machine_labels.iter().any(|l| l == &sample.symptom);
        match (*verdict == "accept", machine) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (tp, fp, fn_, tn)
}

#[tokio::test]
async fn judgments_drive_metrics_and_replay() {
    let store = corpus();
    let sample = sleepy_sample(&store, 0.3);
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("judgments.jsonl");
    let app = app_with(None, vec![sample.clone()], JudgmentLog::open(&log_path).unwrap());
    let metrics_uri = format!("/validation/metrics?symptom={}", enc(SLEEPY));

    let (s, _) = send_json(&app, "GET", &metrics_uri, None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _) = send_json(&app, "POST", "/curation/judgment", Some(judgment("nope-v1", SLEEPY, "accept", "c1"))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let id0 = sample.items[0].verbatim_id.clone();
    let (s, _) = send_json(&app, "POST", "/curation/judgment", Some(judgment(&id0, "Not a symptom", "accept", "c1"))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = send_json(&app, "POST", "/curation/judgment", Some(json!({"verbatim_id": id0}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let pos = sample.items.iter().find(|it| !it.is_enriched_negative).unwrap().verbatim_id.clone();
    let pos2 = sample.items.iter().filter(|it| !it.is_enriched_negative).nth(1).unwrap().verbatim_id.clone();
    let neg = sample.items.iter().find(|it| it.is_enriched_negative).unwrap().verbatim_id.clone();

    // accept is reflected at once
    send_json(&app, "POST", "/curation/judgment", Some(judgment(&pos, SLEEPY, "accept", "c1"))).await;
    let (s, v) = send_json(&app, "GET", &metrics_uri, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((v["tp"].as_u64(), v["judged"].as_u64()), (Some(1), Some(1)));

    // latest verdict from the same curator wins
    send_json(&app, "POST", "/curation/judgment", Some(judgment(&pos2, SLEEPY, "accept", "c1"))).await;
    send_json(&app, "POST", "/curation/judgment", Some(judgment(&pos2, SLEEPY, "reject", "c1"))).await;
    send_json(&app, "POST", "/curation/judgment", Some(judgment(&neg, SLEEPY, "reject", "c1"))).await;
    let (_, v) = send_json(&app, "GET", &metrics_uri, None).await;
    let want = expected_counts(&sample, &[(&pos, "accept"), (&pos2, "reject"), (&neg, "reject")]);
    let got = (
        v["tp"].as_u64().unwrap(),
        v["fp"].as_u64().unwrap(),
        v["fn"].as_u64().unwrap(),
        v["tn"].as_u64().unwrap(),
    );
    assert_eq!(got, want);
    assert_eq!(got, (1, 1, 0, 1));
    assert_eq!(v["judged"], 3);
    assert!((v["precision"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    // replaying the log file into a fresh service gives identical metrics
    let replayed = app_with(None, vec![sample.clone()], JudgmentLog::open(&log_path).unwrap());
    let (_, a) = send(&app, "GET", &metrics_uri, None).await;
    let (_, b) = send(&replayed, "GET", &metrics_uri, None).await;
    assert_eq!(a, b);
    let lines = std::fs::read_to_string(&log_path).unwrap().lines().count();
    assert_eq!(lines, 4);
}

#[tokio::test]
async fn reload_reports_rule_effects() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(None, vec![], JudgmentLog::in_memory());
    let same = dir.path().join("same.csv");
    std::fs::write(&same, fixtures::RULES_CSV).unwrap();
    let (s, v) = send_json(&app, "POST", "/rules/reload", Some(json!({"term_table_path": same}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["compiled_symptoms"], 65);
    assert_eq!(v["diff"], json!({}));

    // a new include row for Dreams picks up verbatims mentioning nightmares
    let store = corpus();
    let expected: BTreeSet<String> = annotated(&store)
        .into_iter()
        .filter(|r| {
            let text = store.verbatim(&r.verbatim_id).unwrap().combined.to_lowercase();
            !r.labels.contains("Dreams") && text.split(|c: char| !c.is_alphanumeric()).any(|w| w == "fatigue")
        })
        .map(|r| r.verbatim_id)
        .collect();
    assert!(!expected.is_empty());
    let grown = dir.path().join("grown.csv");
    std::fs::write(&grown, format!("{}Sleep,Dreams,9,include,fatigue\n", fixtures::RULES_CSV)).unwrap();
    let (s, v) = send_json(&app, "POST", "/rules/reload", Some(json!({"term_table_path": grown}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let added: BTreeSet<String> = v["diff"]["Dreams"]["added"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap().to_string())
        .collect();
    assert_eq!(added, expected);
    assert_eq!(v["diff"].as_object().unwrap().len(), 1);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, format!("{}Sleep,Dreams,9,include,\"dream AND (\"\n", fixtures::RULES_CSV)).unwrap();
    let (s, v) = send_json(&app, "POST", "/rules/reload", Some(json!({"term_table_path": bad}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["symptom"], "Dreams");
    assert_eq!(v["serial"], 9);
    assert_eq!(v["cell"], "dream AND (");

    let (s, _) = send_json(&app, "POST", "/rules/reload", Some(json!({"term_table_path": "/no/such/file.csv"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn service_opens_a_store_directory() {
    let dir = tempfile::tempdir().unwrap();
    let store = corpus();
    store.save(dir.path()).unwrap();
    let sample = sleepy_sample(&store, 0.1);
    sample.save(&vf_core::layout::sample_path(dir.path(), SLEEPY)).unwrap();
    std::fs::write(vf_core::layout::rules_path(dir.path()), fixtures::RULES_CSV).unwrap();
    let cur = Curation::open(dir.path(), None).unwrap();
    assert_eq!(cur.rules.len(), 65);
    assert_eq!(cur.annotated, annotated(&store));
    let log = JudgmentLog::open(&vf_core::layout::judgments_path(dir.path())).unwrap();
    let app = router(Arc::new(AppState::new(None, cur, log)));
    let (s, v) = send_json(&app, "GET", &format!("/curation/next?symptom={}", enc(SLEEPY)), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["verbatim_id"], sample.items[0].verbatim_id.as_str());
}
