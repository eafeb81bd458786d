//! Criteria that run the pipeline end to end, mostly through the `vf` binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use vf_core::annotate::{annotate_corpus, sample_for_validation, validation_report, Verdict};
use vf_core::corpus::CorpusStore;
use vf_core::index::IndexSnapshot;
use vf_core::synth::{self, SynthConfig};
use vf_core::dictionary::SymptomRule;
use vf_core::fixtures;

use crate::{ensure, Outcome};

/// Runs `vf` and returns its stdout, or a failure carrying its stderr.
fn vf(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vf"))
        .args(args)
        .output()
        .map_err(|e| format!("spawn vf: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "vf {} exited {}: {}",
            args.first().unwrap_or(&""),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(dir: &Path, rel: &str) -> String {
    dir.join(rel).to_string_lossy().into_owned()
}

/// synth, ingest, index and annotate with the bundled tuned term table.
fn prepare(dir: &Path, n: usize, curated: usize) -> Result<(), String> {
    std::fs::write(dir.join("rules.csv"), fixtures::RULES_CSV).map_err(|e| e.to_string())?;
    let (n, curated) = (n.to_string(), curated.to_string());
    vf(&["synth", "--n", &n, "--curated", &curated, "--seed", "42", "--out-dir", &p(dir, "synth")])?;
    vf(&["ingest", "--corpus", &p(dir, "synth/corpus.jsonl"), "--store", &p(dir, "store")])?;
    vf(&["index", "--store", &p(dir, "store")])?;
    vf(&["annotate", "--rules", &p(dir, "rules.csv"), "--store", &p(dir, "store"), "--out", &p(dir, "annotated.jsonl")])?;
    vf(&[
        "dataset", "filter", "--in", &p(dir, "annotated.jsonl"), "--out", &p(dir, "filtered.jsonl"),
        "--exclude", &p(dir, "synth/curated.jsonl"),
    ])?;
    vf(&["dataset", "split", "--in", &p(dir, "filtered.jsonl"), "--out-dir", &p(dir, "split"), "--store", &p(dir, "store")])?;
    Ok(())
}

fn micro(report: &serde_json::Value, model: &str) -> Result<(f64, f64, f64), String> {
    let r = report.get(model).ok_or(format!("no report for {model}"))?;
    let f = |k: &str| r[k].as_f64().ok_or(format!("{model}.{k} missing"));
    Ok((f("micro_f1")?, f("micro_recall")?, f("micro_precision")?))
}

pub fn end_to_end() -> Outcome {
    const MIN_F1: f64 = 0.90;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    prepare(dir, 5000, 745)?;
    let held = vf(&["dataset", "heldout", "--curated", &p(dir, "synth/curated.jsonl"), "--out-dir", &p(dir, "heldout")])?;
    let held: serde_json::Value = serde_json::from_str(&held).map_err(|e| e.to_string())?;
    vf(&[
        "train", "--train", &p(dir, "split/train.jsonl"), "--val", &p(dir, "split/validation.jsonl"),
        "--out", &p(dir, "main.vfmb"), "--epochs", "50", "--seed", "42", "--store", &p(dir, "store"),
    ])?;
    vf(&[
        "train", "--train", &p(dir, "heldout/baseline_train.jsonl"), "--out", &p(dir, "baseline.vfmb"),
        "--epochs", "50", "--seed", "42", "--store", &p(dir, "store"),
    ])?;
    let report = vf(&[
        "evaluate", "--bundle", &p(dir, "main.vfmb"), "--bundle", &p(dir, "baseline.vfmb"),
        "--test", &p(dir, "heldout/heldout_test.jsonl"), "--store", &p(dir, "store"), "--format", "json",
    ])?;
    let report: serde_json::Value = serde_json::from_str(&report).map_err(|e| e.to_string())?;
    let (f1, recall, precision) = micro(&report, "main")?;
    let (bf1, brecall, bprecision) = micro(&report, "baseline")?;
    let detail = format!(
        "heldout {} + baseline {}; main F1 {f1:.4} R {recall:.4} P {precision:.4}; \
         baseline F1 {bf1:.4} R {brecall:.4} P {bprecision:.4}",
        held["heldout_test"], held["baseline_train"]
    );
    ensure!(f1 >= MIN_F1, "main F1 below {MIN_F1}: {detail}");
    ensure!(bf1 < f1 && brecall < recall, "baseline not strictly lower: {detail}");
    Ok(detail)
}

fn in_band(rules: &[SymptomRule], fraction: f64) -> Result<(usize, usize, Vec<String>), String> {
    let tax = fixtures::taxonomy();
    let s = synth::generate(&tax, &fixtures::rules(), &fixtures::synonyms(), &SynthConfig::default())
        .map_err(|e| e.to_string())?;
    let truth: BTreeMap<String, _> = s.rows.iter().map(|r| (r.verbatim_id(), r.labels.clone())).collect();
    let mut store = CorpusStore::new();
    store.ingest_rows(s.corpus_rows().iter());
    let index = IndexSnapshot::build(store.verbatims()).map_err(|e| e.to_string())?;
    let annotated = annotate_corpus(rules, &index).map_err(|e| e.to_string())?;
    let (mut inside, mut outside) = (0, Vec::new());
    let symptoms = tax.symptoms();
    for sym in symptoms {
        let name = &sym.symptom;
        let related = synth::related_symptom(&tax, name).ok_or(format!("no related symptom for {name}"))?;
        let sample = sample_for_validation(&annotated, name, fraction, 0.25, &related, 42).map_err(|e| e.to_string())?;
        // the simulated curator knows the generator's labels
        let verdicts: BTreeMap<(String, String), Verdict> = sample
            .items
            .iter()
            .map(|it| {
                let yes = truth[&it.verbatim_id].contains(name);
                ((it.verbatim_id.clone(), name.clone()), if yes { Verdict::Accept } else { Verdict::Reject })
            })
            .collect();
        let r = validation_report(&sample, &verdicts).map_err(|e| e.to_string())?;
        if (0.95..=1.0).contains(&r.f1) {
            inside += 1;
        } else {
            outside.push(format!("{name} {:.2}", r.f1));
        }
    }
    Ok((inside, symptoms.len(), outside))
}

pub fn validation_band() -> Outcome {
    const FRACTION: f64 = 0.25;
    const REQUIRED: f64 = 0.90;
    let (before, total, low) = in_band(&fixtures::initial_rules(), FRACTION)?;
    let (after, _, still_low) = in_band(&fixtures::rules(), FRACTION)?;
    let share = after as f64 / total as f64;
    let detail = format!(
        "round 0 {before}/{total} in [0.95, 1] (below: {}); after tuning {after}/{total}{}",
        low.join(", "),
        if still_low.is_empty() { String::new() } else { format!(" (below: {})", still_low.join(", ")) }
    );
    ensure!(share >= REQUIRED, "{:.1}% in band, need {:.0}%: {detail}", share * 100.0, REQUIRED * 100.0);
    Ok(detail)
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let path = e.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn reduced_run(dir: &Path) -> Result<(), String> {
    prepare(dir, 1500, 200)?;
    vf(&[
        "dict", "train-w2v", "--corpus", &p(dir, "synth/corpus.jsonl"), "--out", &p(dir, "w2v.vfw2v"),
        "--dim", "32", "--epochs", "2",
    ])?;
    vf(&["dataset", "heldout", "--curated", &p(dir, "synth/curated.jsonl"), "--out-dir", &p(dir, "heldout")])?;
    vf(&[
        "train", "--train", &p(dir, "split/train.jsonl"), "--val", &p(dir, "split/validation.jsonl"),
        "--out", &p(dir, "model.vfmb"), "--epochs", "3", "--store", &p(dir, "store"),
        "--history", &p(dir, "history.jsonl"),
    ])?;
    vf(&[
        "evaluate", "--bundle", &p(dir, "model.vfmb"), "--test", &p(dir, "split/test.jsonl"),
        "--store", &p(dir, "store"), "--report-dir", &p(dir, "reports"),
    ])?;
    Ok(())
}

pub fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    reduced_run(a.path())?;
    reduced_run(b.path())?;
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    ensure!(fa == fb, "different file sets: {fa:?} vs {fb:?}");
    for f in &fa {
        let x = std::fs::read(a.path().join(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| e.to_string())?;
        ensure!(x == y, "{} differs between runs", f.display());
    }
    for required in ["store/index.vfix", "w2v.vfw2v", "split/manifest.json", "model.vfmb", "reports/model.json"] {
        ensure!(fa.iter().any(|f| f == Path::new(required)), "{required} not produced");
    }
    Ok(format!("{} artifacts bitwise identical across two runs", fa.len()))
}
