//! Tokenisation shared by the keyword matchers, the stance baseline and the embedder.

use unicode_normalization::UnicodeNormalization;

/// A maximal run of alphanumeric characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lowercased form.
    pub norm: String,
    /// Byte range in the NFC-normalised source text.
    pub start: usize,
    pub end: usize,
}

pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

/// Splits NFC-normalised `text` into alphanumeric tokens. Everything else
/// (whitespace, punctuation, emoji, apostrophes) is a boundary.
pub fn tokenize_nfc(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(make_token(text, s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(make_token(text, s, text.len()));
    }
    out
}

fn make_token(text: &str, start: usize, end: usize) -> Token {
    Token {
        norm: text[start..end].to_lowercase(),
        start,
        end,
    }
}

/// Lowercased tokens of arbitrary text.
pub fn words(text: &str) -> Vec<String> {
    tokenize_nfc(&nfc(text)).into_iter().map(|t| t.norm).collect()
}
