//! Tweet normalization and tokenization.
//!
//! Normalization removes hashtags, user mentions, URLs and a leading retweet
//! marker, deletes every character outside `[a-z0-9]` and lowercases the
//! rest. The output alphabet is `a-z`, `0-9` and single spaces.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("text is not normalized: unexpected {found:?} at byte {offset}")]
    NotNormalized { offset: usize, found: char },
    #[error("text is not normalized: empty token at byte {offset}")]
    EmptyToken { offset: usize },
}

/// Ordered list of normalized tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    /// Wraps tokens that are already known to be normalized.
    ///
    /// Panics in debug builds when a token violates the normalized alphabet.
    pub fn from_normalized<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        debug_assert!(tokens
            .iter()
            .all(|t| !t.is_empty() && t.bytes().all(is_normal_byte)));
        TokenSequence(tokens)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    /// Keeps at most `cap` leading tokens.
    pub fn truncated(&self, cap: usize) -> TokenSequence {
        TokenSequence(self.0.iter().take(cap).cloned().collect())
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl<'a> IntoIterator for &'a TokenSequence {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

fn is_normal_byte(b: u8) -> bool {
    b.is_ascii_lowercase() || b.is_ascii_digit()
}

/// True for tokens removed as a whole: hashtags, mentions and URLs.
///
/// Leading punctuation other than `#`/`@` is skipped before the prefix test,
/// so `"(#tag)"` and `"...@user"` still count.
fn is_removed_token(lowered: &str) -> bool {
    let start = lowered
        .char_indices()
        .find(|&(_, c)| c.is_alphanumeric() || c == '#' || c == '@')
        .map(|(i, _)| i);
    let Some(start) = start else {
        return false;
    };
    let rest = &lowered[start..];
    rest.starts_with('#')
        || rest.starts_with('@')
        || rest.starts_with("www.")
        || rest.contains("http")
        || rest.contains("://")
}

/// Normalizes raw tweet text. Never fails; the result may be empty.
pub fn normalize_text(raw: &str) -> String {
    let folded = raw.to_lowercase();
    let mut kept: Vec<String> = Vec::new();
    for word in folded.split_whitespace() {
        if is_removed_token(word) {
            continue;
        }
        let cleaned: String = word
            .chars()
            .filter(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
            .collect();
        // deleting punctuation can glue a URL scheme back together ("ht.tp")
        if cleaned.is_empty() || cleaned.contains("http") {
            continue;
        }
        kept.push(cleaned);
    }
    let leading_rt = kept.iter().take_while(|t| t.as_str() == "rt").count();
    kept[leading_rt..].join(" ")
}

/// Splits normalized text on single spaces.
pub fn tokenize(normalized: &str) -> Result<TokenSequence, PreprocessError> {
    if normalized.is_empty() {
        return Ok(TokenSequence::default());
    }
    for (offset, c) in normalized.char_indices() {
        if c != ' ' && !(c.is_ascii_lowercase() || c.is_ascii_digit()) {
            return Err(PreprocessError::NotNormalized { offset, found: c });
        }
    }
    let mut tokens = Vec::new();
    let mut offset = 0;
    for piece in normalized.split(' ') {
        if piece.is_empty() {
            return Err(PreprocessError::EmptyToken { offset });
        }
        tokens.push(piece.to_string());
        offset += piece.len() + 1;
    }
    Ok(TokenSequence(tokens))
}

/// `normalize_text` followed by `tokenize`.
pub fn preprocess(raw: &str) -> TokenSequence {
    let normalized = normalize_text(raw);
    tokenize(&normalized).expect("normalize_text output is always tokenizable")
}
