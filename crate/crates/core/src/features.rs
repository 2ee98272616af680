//! Per-sample feature extraction: contextual token embeddings, the flat
//! character one-hot sequence and the hate-term multi-hot vector.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Lexicon, MultiHotVector};
use crate::preprocess::TokenSequence;

pub const CHAR_ALPHABET: usize = 26;
pub const DEFAULT_TOKEN_CAP: usize = 64;
pub const DEFAULT_CHAR_CAP: usize = 280;
pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB1_HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("token sequence is empty")]
    EmptyTokens,
    #[error("no a-z characters in the token sequence")]
    NoLetters,
    #[error("no embedding for sample {0:?}")]
    MissingEmbedding(String),
    #[error("embedding for sample {id:?} has {rows} rows but {needed} tokens need vectors")]
    TooFewRows { id: String, rows: usize, needed: usize },
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("feature set requires a {0} encoder that was not supplied")]
    MissingEncoder(&'static str),
    #[error(transparent)]
    Format(#[from] Emb1Error),
}

#[derive(Debug, Error)]
pub enum Emb1Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic bytes {found:?}, expected \"EMB1\"")]
    BadMagic { found: Vec<u8> },
    #[error("file truncated at byte offset {offset} while reading {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("non-finite value at byte offset {offset}")]
    NonFinite { offset: usize },
    #[error("duplicate sample id {id:?} at byte offset {offset}")]
    DuplicateId { id: String, offset: usize },
    #[error("sample id at byte offset {offset} is not valid UTF-8")]
    BadId { offset: usize },
    #[error("{extra} trailing bytes after the last record at byte offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("record {id:?} has dimension {found}, file dimension is {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("header declares dimension 0")]
    ZeroDimension,
    #[error("sample id {0:?} is longer than 65535 bytes")]
    IdTooLong(String),
    #[error("record {id:?} contains a non-finite value")]
    NonFiniteValue { id: String },
}

/// One-hot character rows, stored as alphabet indices (`a` = 0 .. `z` = 25).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharMatrix {
    indices: Vec<u8>,
}

impl CharMatrix {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u8] {
        &self.indices
    }

    pub fn row(&self, i: usize) -> [f32; CHAR_ALPHABET] {
        let mut row = [0.0; CHAR_ALPHABET];
        row[self.indices[i] as usize] = 1.0;
        row
    }

    /// Dense row-major `[len, 26]` values.
    pub fn to_dense(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.len() * CHAR_ALPHABET];
        for (r, &c) in self.indices.iter().enumerate() {
            out[r * CHAR_ALPHABET + c as usize] = 1.0;
        }
        out
    }
}

/// Concatenates the letters of all tokens, skipping digits, up to `cap` rows.
pub fn encode_chars(tokens: &TokenSequence, cap: usize) -> Result<CharMatrix, FeatureError> {
    let indices: Vec<u8> = tokens
        .iter()
        .flat_map(|t| t.bytes())
        .filter(u8::is_ascii_lowercase)
        .map(|b| b - b'a')
        .take(cap)
        .collect();
    if indices.is_empty() {
        return Err(FeatureError::NoLetters);
    }
    Ok(CharMatrix { indices })
}

/// Row-major `[rows, dim]` matrix of per-token vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, values: Vec<f32>) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        assert_eq!(values.len() % dim, 0, "values must fill whole rows");
        EmbeddingMatrix { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn truncated(&self, rows: usize) -> EmbeddingMatrix {
        let rows = rows.min(self.rows());
        EmbeddingMatrix {
            dim: self.dim,
            values: self.values[..rows * self.dim].to_vec(),
        }
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_bytes(bytes: &[u8]) -> u64 {
    // FNV-1a, then avalanche
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Deterministic stand-in for a contextual encoder.
///
/// Row `t` depends only on `(seed, token, t)`: their avalanche hash keys a
/// counter-based generator whose outputs are mapped to `[-1, 1]`.
pub fn mock_embed(tokens: &TokenSequence, dim: usize, seed: u64) -> EmbeddingMatrix {
    assert!(dim >= 1, "mock embedding dimension must be at least 1");
    let mut values = Vec::with_capacity(tokens.len() * dim);
    for (pos, tok) in tokens.iter().enumerate() {
        let key = mix64(mix64(seed) ^ hash_bytes(tok.as_bytes()) ^ mix64((pos as u64).wrapping_add(1).wrapping_mul(GOLDEN)));
        for k in 0..dim as u64 {
            let bits = mix64(key.wrapping_add(k.wrapping_add(1).wrapping_mul(GOLDEN)));
            let unit = (bits >> 11) as f64 / (1u64 << 53) as f64;
            values.push((2.0 * unit - 1.0) as f32);
        }
    }
    EmbeddingMatrix { dim, values }
}

/// Source of contextual token vectors.
pub trait EmbeddingProvider: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Vectors for the first `tokens.len()` tokens of sample `id`.
    fn embed(&self, id: &str, tokens: &TokenSequence) -> Result<EmbeddingMatrix, FeatureError>;
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    pub dim: usize,
    pub seed: u64,
    name: String,
}

impl MockProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        MockProvider {
            dim,
            seed,
            name: "mock".to_string(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl EmbeddingProvider for MockProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _id: &str, tokens: &TokenSequence) -> Result<EmbeddingMatrix, FeatureError> {
        Ok(mock_embed(tokens, self.dim, self.seed))
    }
}

/// Precomputed vectors loaded from an EMB1 file, looked up by sample id.
#[derive(Debug, Clone)]
pub struct FileProvider {
    name: String,
    dim: usize,
    records: HashMap<String, EmbeddingMatrix>,
}

impl FileProvider {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, Emb1Error> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "emb1".to_string());
        let file = read_embeddings(path)?;
        Ok(FileProvider {
            name,
            dim: file.dim,
            records: file.records.into_iter().collect(),
        })
    }

    pub fn from_records(name: impl Into<String>, dim: usize, records: HashMap<String, EmbeddingMatrix>) -> Self {
        FileProvider {
            name: name.into(),
            dim,
            records,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl EmbeddingProvider for FileProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, id: &str, tokens: &TokenSequence) -> Result<EmbeddingMatrix, FeatureError> {
        let m = self
            .records
            .get(id)
            .ok_or_else(|| FeatureError::MissingEmbedding(id.to_string()))?;
        if m.rows() < tokens.len() {
            return Err(FeatureError::TooFewRows {
                id: id.to_string(),
                rows: m.rows(),
                needed: tokens.len(),
            });
        }
        Ok(m.truncated(tokens.len()))
    }
}

/// Parsed EMB1 file; records keep file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Emb1File {
    pub dim: usize,
    pub records: Vec<(String, EmbeddingMatrix)>,
}

impl Emb1File {
    pub fn into_map(self) -> HashMap<String, EmbeddingMatrix> {
        self.records.into_iter().collect()
    }
}

/// Encodes records in the EMB1 layout.
pub fn encode_embeddings(dim: usize, records: &[(String, EmbeddingMatrix)]) -> Result<Vec<u8>, Emb1Error> {
    if dim == 0 {
        return Err(Emb1Error::ZeroDimension);
    }
    let payload: usize = records
        .iter()
        .map(|(id, m)| 2 + id.len() + 4 + 4 * m.values().len())
        .sum();
    let mut out = Vec::with_capacity(EMB1_HEADER_LEN + payload);
    out.extend_from_slice(EMB1_MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (id, m) in records {
        if m.dim() != dim {
            return Err(Emb1Error::DimensionMismatch {
                id: id.clone(),
                expected: dim,
                found: m.dim(),
            });
        }
        if m.values().iter().any(|v| !v.is_finite()) {
            return Err(Emb1Error::NonFiniteValue { id: id.clone() });
        }
        let id_len = u16::try_from(id.len()).map_err(|_| Emb1Error::IdTooLong(id.clone()))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        for v in m.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes records to `path` atomically (temp file then rename).
pub fn write_embeddings(path: impl AsRef<Path>, dim: usize, records: &[(String, EmbeddingMatrix)]) -> Result<(), Emb1Error> {
    let bytes = encode_embeddings(dim, records)?;
    crate::fsutil::write_atomic(path.as_ref(), &bytes).map_err(|source| Emb1Error::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], Emb1Error> {
        if self.bytes.len() - self.pos < n {
            return Err(Emb1Error::Truncated { offset: self.pos, what });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, Emb1Error> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, Emb1Error> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Emb1File, Emb1Error> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic").map_err(|_| Emb1Error::BadMagic {
        found: bytes[..bytes.len().min(4)].to_vec(),
    })?;
    if magic != EMB1_MAGIC {
        return Err(Emb1Error::BadMagic { found: magic.to_vec() });
    }
    let dim = r.u32("dimension")? as usize;
    if dim == 0 {
        return Err(Emb1Error::ZeroDimension);
    }
    let count = r.u32("record count")? as usize;
    let mut seen = std::collections::HashSet::new();
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id_offset = r.pos;
        let id_len = r.u16("id length")? as usize;
        let id = std::str::from_utf8(r.take(id_len, "id bytes")?)
            .map_err(|_| Emb1Error::BadId { offset: id_offset })?
            .to_string();
        if !seen.insert(id.clone()) {
            return Err(Emb1Error::DuplicateId { id, offset: id_offset });
        }
        let rows = r.u32("token count")? as usize;
        let n = rows.checked_mul(dim).ok_or(Emb1Error::Truncated {
            offset: r.pos,
            what: "record values",
        })?;
        let start = r.pos;
        let raw = r.take(n.saturating_mul(4), "record values")?;
        let mut values = Vec::with_capacity(n);
        for (k, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Emb1Error::NonFinite { offset: start + 4 * k });
            }
            values.push(v);
        }
        records.push((id, EmbeddingMatrix { dim, values }));
    }
    if r.pos != bytes.len() {
        return Err(Emb1Error::TrailingBytes {
            offset: r.pos,
            extra: bytes.len() - r.pos,
        });
    }
    Ok(Emb1File { dim, records })
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Emb1File, Emb1Error> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Emb1Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_embeddings(&bytes)
}

/// Which of the three feature branches a model uses. Serialized as its
/// `+`-joined tag, e.g. `"EMB+CH+HW"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FeatureSet {
    pub embeddings: bool,
    pub chars: bool,
    pub hate_words: bool,
}

impl FeatureSet {
    pub const ALL: FeatureSet = FeatureSet {
        embeddings: true,
        chars: true,
        hate_words: true,
    };

    pub fn is_empty(&self) -> bool {
        !(self.embeddings || self.chars || self.hate_words)
    }

    /// The seven non-empty combinations in ablation-table order.
    pub fn all_combinations() -> Vec<FeatureSet> {
        let f = |e, c, h| FeatureSet {
            embeddings: e,
            chars: c,
            hate_words: h,
        };
        vec![
            f(true, false, false),
            f(false, true, false),
            f(false, false, true),
            f(false, true, true),
            f(true, false, true),
            f(true, true, false),
            f(true, true, true),
        ]
    }
}

impl Default for FeatureSet {
    fn default() -> Self {
        FeatureSet::ALL
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.embeddings {
            parts.push("EMB");
        }
        if self.chars {
            parts.push("CH");
        }
        if self.hate_words {
            parts.push("HW");
        }
        if parts.is_empty() {
            f.write_str("-")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid feature set {0:?}: expected '+'-separated EMB, CH, HW")]
pub struct ParseFeatureSetError(pub String);

impl FromStr for FeatureSet {
    type Err = ParseFeatureSetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = FeatureSet {
            embeddings: false,
            chars: false,
            hate_words: false,
        };
        for part in s.split('+').map(str::trim) {
            match part.to_ascii_uppercase().as_str() {
                "EMB" | "BB" | "HB" => set.embeddings = true,
                "CH" => set.chars = true,
                "HW" => set.hate_words = true,
                _ => return Err(ParseFeatureSetError(s.to_string())),
            }
        }
        if set.is_empty() {
            return Err(ParseFeatureSetError(s.to_string()));
        }
        Ok(set)
    }
}

impl Serialize for FeatureSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FeatureSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Encoder outputs for one sample. Disabled branches are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub embeddings: Option<EmbeddingMatrix>,
    pub chars: Option<CharMatrix>,
    pub hate: Option<MultiHotVector>,
}

/// The encoders shared by training and prediction.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub features: FeatureSet,
    pub token_cap: usize,
    pub char_cap: usize,
    pub provider: Option<Arc<dyn EmbeddingProvider>>,
    pub lexicon: Option<Arc<Lexicon>>,
}

impl FeatureExtractor {
    /// Fails when an enabled branch lacks its encoder.
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.features.embeddings && self.provider.is_none() {
            return Err(FeatureError::MissingEncoder("embedding"));
        }
        if self.features.hate_words && self.lexicon.is_none() {
            return Err(FeatureError::MissingEncoder("lexicon"));
        }
        Ok(())
    }

    /// Builds the enabled features for sample `id`.
    ///
    /// Embeddings cover the first `token_cap` tokens; the character sequence is
    /// capped at `char_cap` rows; the multi-hot vector sees every token.
    pub fn build(&self, id: &str, tokens: &TokenSequence) -> Result<FeatureBundle, FeatureError> {
        if tokens.is_empty() {
            return Err(FeatureError::EmptyTokens);
        }
        let embeddings = if self.features.embeddings {
            let provider = self.provider.as_ref().ok_or(FeatureError::MissingEncoder("embedding"))?;
            let m = provider.embed(id, &tokens.truncated(self.token_cap))?;
            if m.dim() != provider.dim() {
                return Err(FeatureError::DimensionMismatch {
                    expected: provider.dim(),
                    found: m.dim(),
                });
            }
            Some(m)
        } else {
            None
        };
        let chars = if self.features.chars {
            Some(encode_chars(tokens, self.char_cap)?)
        } else {
            None
        };
        let hate = if self.features.hate_words {
            let lexicon = self.lexicon.as_ref().ok_or(FeatureError::MissingEncoder("lexicon"))?;
            Some(lexicon.encode(tokens))
        } else {
            None
        };
        Ok(FeatureBundle { embeddings, chars, hate })
    }
}

/// All three features with the default caps.
pub fn build_bundle(
    id: &str,
    tokens: &TokenSequence,
    provider: Arc<dyn EmbeddingProvider>,
    lexicon: Arc<Lexicon>,
) -> Result<FeatureBundle, FeatureError> {
    FeatureExtractor {
        features: FeatureSet::ALL,
        token_cap: DEFAULT_TOKEN_CAP,
        char_cap: DEFAULT_CHAR_CAP,
        provider: Some(provider),
        lexicon: Some(lexicon),
    }
    .build(id, tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> TokenSequence {
        TokenSequence::from_normalized(words.iter().copied())
    }

    #[test]
    fn char_examples() {
        assert_eq!(encode_chars(&toks(&["ab"]), 280).unwrap().indices(), [0, 1]);
        assert_eq!(encode_chars(&toks(&["a9z"]), 280).unwrap().indices(), [0, 25]);
        let m = encode_chars(&toks(&["go", "home"]), 280).unwrap();
        assert_eq!(m.indices(), [6, 14, 7, 14, 12, 4]);
        assert!(matches!(encode_chars(&toks(&["123"]), 280), Err(FeatureError::NoLetters)));
        assert_eq!(encode_chars(&toks(&["abcdef"]), 4).unwrap().len(), 4);
    }

    #[test]
    fn char_rows_are_one_hot() {
        let m = encode_chars(&toks(&["hello", "z0rld"]), 280).unwrap();
        let dense = m.to_dense();
        for r in 0..m.len() {
            let row = &dense[r * 26..(r + 1) * 26];
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().sum::<f32>(), 1.0);
            assert_eq!(row, m.row(r));
        }
    }

    #[test]
    fn mock_embed_contracts() {
        let a = mock_embed(&toks(&["a"]), 4, 42);
        assert_eq!(a, mock_embed(&toks(&["a"]), 4, 42));
        let aa = mock_embed(&toks(&["a", "a"]), 4, 42);
        assert_ne!(aa.row(0), aa.row(1));
        assert_eq!(aa.row(0), a.row(0));
        let xy = mock_embed(&toks(&["x", "y"]), 16, 7);
        assert!(xy.values().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(mock_embed(&toks(&["a"]), 4, 43), a);
    }

    #[test]
    fn empty_file_is_header_only() {
        let bytes = encode_embeddings(768, &[]).unwrap();
        assert_eq!(bytes.len(), EMB1_HEADER_LEN);
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(decode_embeddings(&bytes).unwrap(), Emb1File { dim: 768, records: vec![] });
    }

    #[test]
    fn mixed_dims_rejected() {
        let recs = vec![
            ("a".to_string(), EmbeddingMatrix::new(768, vec![0.0; 768])),
            ("b".to_string(), EmbeddingMatrix::new(64, vec![0.0; 64])),
        ];
        assert!(matches!(
            encode_embeddings(768, &recs),
            Err(Emb1Error::DimensionMismatch { found: 64, .. })
        ));
    }

    #[test]
    fn malformed_files_rejected() {
        let recs = vec![
            ("s1".to_string(), EmbeddingMatrix::new(2, vec![1.0, 2.0, 3.0, 4.0])),
            ("s2".to_string(), EmbeddingMatrix::new(2, vec![5.0, 6.0])),
        ];
        let bytes = encode_embeddings(2, &recs).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_embeddings(&bad), Err(Emb1Error::BadMagic { .. })));

        // header 12 + rec1 (2+2+4+16=24) + rec2 id (2+2) + count 4 + one float
        let cut = &bytes[..12 + 24 + 8 + 4];
        match decode_embeddings(cut) {
            Err(Emb1Error::Truncated { offset, what }) => {
                assert_eq!(offset, 12 + 24 + 8);
                assert_eq!(what, "record values");
            }
            other => panic!("unexpected {other:?}"),
        }

        let mut nan = bytes.clone();
        nan[12 + 8..12 + 12].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_embeddings(&nan), Err(Emb1Error::NonFinite { offset: 20 })));

        let dup = encode_embeddings(2, &[recs[0].clone(), recs[0].clone()]).unwrap();
        assert!(matches!(decode_embeddings(&dup), Err(Emb1Error::DuplicateId { offset: 36, .. })));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(decode_embeddings(&trailing), Err(Emb1Error::TrailingBytes { extra: 1, .. })));

        assert!(matches!(decode_embeddings(b"EM"), Err(Emb1Error::BadMagic { .. })));
    }

    #[test]
    fn file_provider_truncates_and_checks_rows() {
        let mut map = HashMap::new();
        map.insert("s".to_string(), EmbeddingMatrix::new(2, vec![1.0, 2.0, 3.0, 4.0]));
        let p = FileProvider::from_records("f", 2, map);
        assert_eq!(p.embed("s", &toks(&["a"])).unwrap().values(), [1.0, 2.0]);
        assert!(matches!(p.embed("s", &toks(&["a", "b", "c"])), Err(FeatureError::TooFewRows { .. })));
        assert!(matches!(p.embed("t", &toks(&["a"])), Err(FeatureError::MissingEmbedding(_))));
    }

    #[test]
    fn bundle_examples() {
        let lex = Arc::new(Lexicon::parse("idiot\nborder jumper\nscum*\n").unwrap().lexicon);
        let provider: Arc<dyn EmbeddingProvider> = Arc::new(MockProvider::new(16, 1));
        let b = build_bundle("x", &toks(&["you", "idiot"]), provider.clone(), lex.clone()).unwrap();
        let emb = b.embeddings.unwrap();
        assert_eq!((emb.rows(), emb.dim()), (2, 16));
        // y,o,u,i,d,i,o,t
        assert_eq!(b.chars.unwrap().len(), 8);
        assert_eq!(b.hate.unwrap().ones(), [0]);

        assert!(matches!(
            build_bundle("x", &toks(&[]), provider.clone(), lex.clone()),
            Err(FeatureError::EmptyTokens)
        ));

        let many: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
        let b = build_bundle("x", &TokenSequence::from_normalized(many), provider, lex).unwrap();
        assert_eq!(b.embeddings.unwrap().rows(), 64);
    }

    #[test]
    fn feature_set_parse_and_display() {
        assert_eq!("EMB+CH+HW".parse::<FeatureSet>().unwrap(), FeatureSet::ALL);
        assert_eq!("ch".parse::<FeatureSet>().unwrap().to_string(), "CH");
        assert!("".parse::<FeatureSet>().is_err());
        assert!("EMB+XX".parse::<FeatureSet>().is_err());
        let tags: Vec<String> = FeatureSet::all_combinations().iter().map(|s| s.to_string()).collect();
        assert_eq!(tags, ["EMB", "CH", "HW", "CH+HW", "EMB+HW", "EMB+CH", "EMB+CH+HW"]);
    }

    fn records() -> impl Strategy<Value = (usize, Vec<(String, Vec<f32>, usize)>)> {
        (1usize..6).prop_flat_map(|dim| {
            let rec = ("[a-z0-9_]{0,8}", 0usize..4).prop_flat_map(move |(id, rows)| {
                (Just(id), proptest::collection::vec(-1e6f32..1e6, rows * dim), Just(rows))
            });
            (Just(dim), proptest::collection::vec(rec, 0..6))
        })
    }

    proptest! {
        #[test]
        fn emb1_round_trip((dim, recs) in records()) {
            let mut seen = std::collections::HashSet::new();
            let recs: Vec<(String, EmbeddingMatrix)> = recs
                .into_iter()
                .filter(|(id, _, _)| seen.insert(id.clone()))
                .map(|(id, vals, _)| (id, EmbeddingMatrix::new(dim, vals)))
                .collect();
            let bytes = encode_embeddings(dim, &recs).unwrap();
            let back = decode_embeddings(&bytes).unwrap();
            prop_assert_eq!(back.dim, dim);
            prop_assert_eq!(back.records.len(), recs.len());
            for ((ia, ma), (ib, mb)) in back.records.iter().zip(&recs) {
                prop_assert_eq!(ia, ib);
                let bits_a: Vec<u32> = ma.values().iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u32> = mb.values().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(bits_a, bits_b);
            }
        }
    }
}
