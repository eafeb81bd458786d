//! Tokenization shared by the index, the query parser and the vectorizer.
//!
//! Text is lowercased and split on every character that is not a letter, a
//! digit or an apostrophe. Positions are token ordinals, not byte offsets.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub position: u32,
}

/// A token together with the character span it was read from in the
/// original (not lowercased) text. Offsets count Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpannedToken {
    pub text: String,
    pub position: u32,
    pub char_start: usize,
    pub char_end: usize,
}

#[inline]
pub fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_spanned(text)
        .into_iter()
        .map(|t| Token {
            text: t.text,
            position: t.position,
        })
        .collect()
}

/// Token texts only; the common case for n-gram extraction.
pub fn token_texts(text: &str) -> Vec<String> {
    tokenize_spanned(text).into_iter().map(|t| t.text).collect()
}

pub fn tokenize_spanned(text: &str) -> Vec<SpannedToken> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0usize;
    let mut idx = 0usize;
    for c in text.chars() {
        if is_token_char(c) {
            if current.is_empty() {
                start = idx;
            }
            // Some lowercase mappings emit combining marks; keep only token
            // characters so tokenizing a token yields the token itself.
            current.extend(c.to_lowercase().filter(|l| is_token_char(*l)));
        } else if !current.is_empty() {
            out.push(SpannedToken {
                text: std::mem::take(&mut current),
                position: out.len() as u32,
                char_start: start,
                char_end: idx,
            });
        }
        idx += 1;
    }
    if !current.is_empty() {
        out.push(SpannedToken {
            text: current,
            position: out.len() as u32,
            char_start: start,
            char_end: idx,
        });
    }
    out
}
