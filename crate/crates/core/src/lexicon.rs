//! Hate-term lexicon loading, n-gram matching and multi-hot encoding.
//!
//! A lexicon file holds one term per line. A trailing `*` turns the last word
//! of the term into a prefix pattern (`scum*` matches `scumbag`). Lines whose
//! first character is `#` are comments. Matching runs over whole normalized
//! tokens: an entry of `n` words matches `n` consecutive tokens.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use thiserror::Error;

use crate::preprocess::TokenSequence;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon contains no valid entries")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    /// Normalized words separated by single spaces.
    pub pattern: String,
    /// Prefix match on the final word.
    pub wildcard: bool,
    pub index: usize,
    words: Vec<String>,
}

impl LexiconEntry {
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Whether the entry matches the tokens starting at `start`.
    pub fn matches_at(&self, tokens: &[String], start: usize) -> bool {
        let n = self.words.len();
        if start + n > tokens.len() {
            return false;
        }
        let window = &tokens[start..start + n];
        let (last_word, head) = self.words.split_last().expect("entries are non-empty");
        let (last_tok, head_toks) = window.split_last().expect("window is non-empty");
        head.iter().zip(head_toks).all(|(w, t)| w == t)
            && if self.wildcard {
                last_tok.starts_with(last_word.as_str())
            } else {
                last_tok == last_word
            }
    }
}

/// Result of parsing a lexicon source.
#[derive(Debug, Clone)]
pub struct LoadedLexicon {
    pub lexicon: Lexicon,
    /// Lines dropped because an identical (pattern, wildcard) pair came first.
    pub duplicates: usize,
    /// Non-comment lines that normalized to nothing.
    pub invalid: usize,
}

/// One occurrence of a lexicon entry, as inclusive token positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub entry: usize,
    pub start: usize,
    pub end: usize,
}

/// Multi-hot presence vector with one position per lexicon entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiHotVector {
    bits: Vec<u8>,
}

impl MultiHotVector {
    pub fn zeros(len: usize) -> Self {
        MultiHotVector { bits: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i] == 1
    }

    pub fn set(&mut self, i: usize) {
        self.bits[i] = 1;
    }

    /// Indices of set bits in ascending order.
    pub fn ones(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    // entries whose first word must match a token exactly
    by_first_word: HashMap<String, Vec<usize>>,
    // single-word prefix entries, keyed by the prefix
    prefixes: HashMap<String, Vec<usize>>,
    max_prefix_len: usize,
}

/// Normalizes one lexicon line into (words, wildcard); `None` for nothing left.
fn normalize_term(line: &str) -> Option<(Vec<String>, bool)> {
    let trimmed = line.trim();
    let body = trimmed.trim_end_matches('*');
    let wildcard = body.len() != trimmed.len();
    let words: Vec<String> = body
        .to_lowercase()
        .split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect();
    if words.is_empty() {
        None
    } else {
        Some((words, wildcard))
    }
}

impl Lexicon {
    /// Parses lexicon text; see the module docs for the line format.
    pub fn parse(source: &str) -> Result<LoadedLexicon, LexiconError> {
        let mut seen = HashSet::new();
        let mut terms = Vec::new();
        let mut duplicates = 0;
        let mut invalid = 0;
        for line in source.lines() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((words, wildcard)) = normalize_term(line) else {
                invalid += 1;
                continue;
            };
            let pattern = words.join(" ");
            if !seen.insert((pattern.clone(), wildcard)) {
                duplicates += 1;
                continue;
            }
            terms.push((pattern, words, wildcard));
        }
        if terms.is_empty() {
            return Err(LexiconError::Empty);
        }
        let entries = terms
            .into_iter()
            .enumerate()
            .map(|(index, (pattern, words, wildcard))| LexiconEntry {
                pattern,
                wildcard,
                index,
                words,
            })
            .collect();
        Ok(LoadedLexicon {
            lexicon: Lexicon::from_entries(entries),
            duplicates,
            invalid,
        })
    }

    /// Builds a lexicon from `(pattern, wildcard)` terms already in normalized form.
    pub fn from_terms<'a, I>(terms: I) -> Result<Lexicon, LexiconError>
    where
        I: IntoIterator<Item = (&'a str, bool)>,
    {
        let source: String = terms
            .into_iter()
            .map(|(p, w)| format!("{p}{}\n", if w { "*" } else { "" }))
            .collect();
        Ok(Lexicon::parse(&source)?.lexicon)
    }

    fn from_entries(entries: Vec<LexiconEntry>) -> Lexicon {
        let mut by_first_word: HashMap<String, Vec<usize>> = HashMap::new();
        let mut prefixes: HashMap<String, Vec<usize>> = HashMap::new();
        let mut max_prefix_len = 0;
        for e in &entries {
            if e.wildcard && e.words.len() == 1 {
                max_prefix_len = max_prefix_len.max(e.words[0].len());
                prefixes.entry(e.words[0].clone()).or_default().push(e.index);
            } else {
                by_first_word
                    .entry(e.words[0].clone())
                    .or_default()
                    .push(e.index);
            }
        }
        Lexicon {
            entries,
            by_first_word,
            prefixes,
            max_prefix_len,
        }
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.entries.len()
    }

    /// Every occurrence of every entry, ordered by start token then entry index.
    pub fn match_spans(&self, tokens: &TokenSequence) -> Vec<Span> {
        let toks = tokens.as_slice();
        let mut spans = Vec::new();
        let mut candidates = Vec::new();
        for (start, tok) in toks.iter().enumerate() {
            candidates.clear();
            if let Some(ids) = self.by_first_word.get(tok) {
                candidates.extend(ids.iter().copied());
            }
            // every prefix of the token is a potential single-word wildcard key;
            // tokens are ASCII so byte slicing is safe
            for len in 1..=tok.len().min(self.max_prefix_len) {
                if let Some(ids) = self.prefixes.get(&tok[..len]) {
                    candidates.extend(ids.iter().copied());
                }
            }
            candidates.sort_unstable();
            for &entry in &candidates {
                let e = &self.entries[entry];
                if e.matches_at(toks, start) {
                    spans.push(Span {
                        entry,
                        start,
                        end: start + e.words.len() - 1,
                    });
                }
            }
        }
        spans
    }

    pub fn encode(&self, tokens: &TokenSequence) -> MultiHotVector {
        let mut v = MultiHotVector::zeros(self.dimension());
        for span in self.match_spans(tokens) {
            v.set(span.entry);
        }
        v
    }
}

/// Reads and parses a lexicon file.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<LoadedLexicon, LexiconError> {
    let path = path.as_ref();
    let source = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Lexicon::parse(&source)
}

pub fn match_spans(tokens: &TokenSequence, lexicon: &Lexicon) -> Vec<Span> {
    lexicon.match_spans(tokens)
}

pub fn encode_hate_words(tokens: &TokenSequence, lexicon: &Lexicon) -> MultiHotVector {
    lexicon.encode(tokens)
}
