//! File names inside a store directory, shared by the command line and the
//! service.

use std::path::{Path, PathBuf};

pub const INDEX_FILE: &str = "index.vfix";
pub const RULES_FILE: &str = "rules.csv";
pub const ANNOTATED_FILE: &str = "annotated.jsonl";
pub const JUDGMENTS_FILE: &str = "judgments.jsonl";
pub const SAMPLES_DIR: &str = "samples";

pub fn index_path(store: &Path) -> PathBuf {
    store.join(INDEX_FILE)
}

pub fn rules_path(store: &Path) -> PathBuf {
    store.join(RULES_FILE)
}

pub fn annotated_path(store: &Path) -> PathBuf {
    store.join(ANNOTATED_FILE)
}

pub fn judgments_path(store: &Path) -> PathBuf {
    store.join(JUDGMENTS_FILE)
}

/// Lowercase ASCII alphanumerics with every other run collapsed to `_`.
pub fn symptom_slug(symptom: &str) -> String {
    let mut out = String::new();
    for c in symptom.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

pub fn sample_path(store: &Path, symptom: &str) -> PathBuf {
    store.join(SAMPLES_DIR).join(format!("{}.json", symptom_slug(symptom)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::collections::BTreeSet;

    #[test]
    fn slugs_are_distinct_over_the_taxonomy() {
        let tax = fixtures::taxonomy();
        let slugs: BTreeSet<String> = tax.symptoms().iter().map(|s| symptom_slug(&s.symptom)).collect();
        assert_eq!(slugs.len(), tax.symptoms().len());
        assert_eq!(symptom_slug("Off periods (medication related)"), "off_periods_medication_related");
    }
}
