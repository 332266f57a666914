//! Word-embedding stores and the averaged multi-embedding cosine similarity.
//!
//! Each [`EmbeddingStore`] holds one embedding family (word2vec, GloVe or
//! fastText). A [`SimilarityConfig`] combines several stores: the similarity
//! of two words is the mean of their per-family cosines, with the handling of
//! out-of-vocabulary families selected by [`OovPolicy`].

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The embedding family a store was trained as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// word2vec
    Wv,
    /// GloVe
    Gv,
    /// fastText
    Ft,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Wv => "wv",
            Family::Gv => "gv",
            Family::Ft => "ft",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wv" | "word2vec" => Ok(Family::Wv),
            "gv" | "glove" => Ok(Family::Gv),
            "ft" | "fasttext" => Ok(Family::Ft),
            other => Err(Error::Config(format!("unknown embedding family `{other}`"))),
        }
    }
}

/// An immutable word → vector map of a single family.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    family: Family,
    dim: usize,
    entries: HashMap<String, Vec<f32>>,
    digest: String,
}

impl EmbeddingStore {
    /// Builds a store from in-memory vectors. Words are case-folded and the
    /// first occurrence of a duplicate wins.
    pub fn from_entries<I, S>(family: Family, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: AsRef<str>,
    {
        let mut map = HashMap::new();
        let mut dim = None;
        let mut hasher = Sha256::new();
        for (word, vec) in entries {
            let word = word.as_ref().to_lowercase();
            if word.is_empty() {
                return Err(Error::InvalidInput("empty word in embedding entries".into()));
            }
            let expected = *dim.get_or_insert(vec.len());
            if expected == 0 {
                return Err(Error::InvalidInput(format!("zero-length vector for `{word}`")));
            }
            if vec.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual: vec.len(),
                });
            }
            if vec.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite component for `{word}`")));
            }
            hasher.update(word.as_bytes());
            for c in &vec {
                hasher.update(c.to_le_bytes());
            }
            map.entry(word).or_insert(vec);
        }
        let dim = dim.ok_or_else(|| Error::InvalidInput("no embedding entries".into()))?;
        Ok(EmbeddingStore {
            family,
            dim,
            entries: map,
            digest: hex::encode(hasher.finalize()),
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// SHA-256 of the store contents; for text files this is the file hash.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Looks up a single token (case-folded). `None` is an out-of-vocabulary miss.
    pub fn get(&self, word: &str) -> Option<&[f32]> {
        match self.entries.get(word) {
            Some(v) => Some(v),
            None => self.entries.get(&word.to_lowercase()).map(Vec::as_slice),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.get(word).is_some()
    }

    /// Vector for a word or a multi-token phrase such as a category label.
    ///
    /// A phrase that is itself in vocabulary is used directly; otherwise it is
    /// split on whitespace, `_` and `-` and the resolvable token vectors are
    /// averaged. Returns `None` when nothing resolves.
    pub fn phrase_vector(&self, text: &str) -> Option<Vec<f64>> {
        let folded = text.trim().to_lowercase();
        if let Some(v) = self.get(&folded) {
            return Some(v.iter().map(|&c| c as f64).collect());
        }
        let mut sum = vec![0.0f64; self.dim];
        let mut found = 0usize;
        for token in folded
            .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
            .filter(|t| !t.is_empty())
        {
            if let Some(v) = self.get(token) {
                for (s, &c) in sum.iter_mut().zip(v) {
                    *s += c as f64;
                }
                found += 1;
            }
        }
        if found == 0 {
            return None;
        }
        for s in &mut sum {
            *s /= found as f64;
        }
        Some(sum)
    }
}

/// Parses a text embedding file: `word c1 ... cd` per line, with an optional
/// leading `count dim` header line.
pub fn load_embeddings(path: impl AsRef<Path>, expected_family: Family) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::parse(path, 0, format!("invalid UTF-8: {e}")))?;

    let mut entries: HashMap<String, Vec<f32>> = HashMap::new();
    let mut dim: Option<usize> = None;
    let mut first_content_line = true;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        let rest: Vec<&str> = fields.collect();
        if first_content_line {
            first_content_line = false;
            if rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
                continue;
            }
        }
        let mut vec = Vec::with_capacity(rest.len());
        for field in &rest {
            let c: f32 = field.parse().map_err(|_| {
                Error::parse(path, line_no, format!("non-numeric component `{field}`"))
            })?;
            if !c.is_finite() {
                return Err(Error::parse(path, line_no, format!("non-finite component `{field}`")));
            }
            vec.push(c);
        }
        match dim {
            None if vec.is_empty() => {
                return Err(Error::parse(path, line_no, format!("no components for `{word}`")));
            }
            None => dim = Some(vec.len()),
            Some(d) if d != vec.len() => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("dimension mismatch: expected {d}, got {}", vec.len()),
                ));
            }
            Some(_) => {}
        }
        entries.entry(word.to_lowercase()).or_insert(vec);
    }
    let dim = dim.ok_or_else(|| Error::parse(path, 0, "empty embedding file"))?;
    Ok(EmbeddingStore {
        family: expected_family,
        dim,
        entries,
        digest: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Result of a cosine computation. `degenerate` is set when either input has
/// zero norm, in which case `value` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    pub degenerate: bool,
}

/// Cosine similarity `a·b / (‖a‖‖b‖)`, clamped to [-1, 1].
///
/// Panics if the slices differ in length.
pub fn cosine(a: &[f64], b: &[f64]) -> Cosine {
    assert_eq!(a.len(), b.len(), "cosine of vectors with different lengths");
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Cosine {
            value: 0.0,
            degenerate: true,
        };
    }
    Cosine {
        value: (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

/// How a word pair is scored when some families cannot resolve both words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OovPolicy {
    /// Average over the families where both words resolve.
    #[default]
    SkipMissingFamily,
    /// Divide by the total number of families; an unresolved family adds 0.
    /// Only an all-missing pair is incomparable.
    #[serde(alias = "zero-if-all-missing")]
    Strict,
}

impl FromStr for OovPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip-missing-family" => Ok(OovPolicy::SkipMissingFamily),
            "strict" | "zero-if-all-missing" => Ok(OovPolicy::Strict),
            other => Err(Error::Config(format!("unknown OOV policy `{other}`"))),
        }
    }
}

/// Averaged similarity of a word pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub value: f64,
    /// False when no family resolves both words.
    pub comparable: bool,
}

impl Similarity {
    const INCOMPARABLE: Similarity = Similarity {
        value: 0.0,
        comparable: false,
    };
}

/// Per-family vectors of one word, resolved once and reused across many
/// comparisons.
#[derive(Debug, Clone)]
pub struct Resolved {
    vectors: Vec<Option<Vec<f64>>>,
}

impl Resolved {
    pub fn is_known(&self) -> bool {
        self.vectors.iter().any(Option::is_some)
    }
}

/// The set of embedding stores used for every similarity in a run.
#[derive(Debug, Clone)]
pub struct SimilarityConfig {
    stores: Vec<Arc<EmbeddingStore>>,
    policy: OovPolicy,
}

impl SimilarityConfig {
    pub fn new(stores: Vec<Arc<EmbeddingStore>>, policy: OovPolicy) -> Result<Self> {
        if stores.is_empty() {
            return Err(Error::Config("at least one embedding store is required".into()));
        }
        Ok(SimilarityConfig { stores, policy })
    }

    pub fn stores(&self) -> &[Arc<EmbeddingStore>] {
        &self.stores
    }

    pub fn policy(&self) -> OovPolicy {
        self.policy
    }

    /// Digests of every store in family order, for provenance headers.
    pub fn digests(&self) -> Vec<(Family, String)> {
        self.stores
            .iter()
            .map(|s| (s.family(), s.digest().to_string()))
            .collect()
    }

    pub fn resolve(&self, word: &str) -> Resolved {
        Resolved {
            vectors: self.stores.iter().map(|s| s.phrase_vector(word)).collect(),
        }
    }

    pub fn similarity_resolved(&self, a: &Resolved, b: &Resolved) -> Similarity {
        let mut sum = 0.0;
        let mut used = 0usize;
        for (va, vb) in a.vectors.iter().zip(&b.vectors) {
            if let (Some(va), Some(vb)) = (va, vb) {
                sum += cosine(va, vb).value;
                used += 1;
            }
        }
        if used == 0 {
            return Similarity::INCOMPARABLE;
        }
        let denom = match self.policy {
            OovPolicy::SkipMissingFamily => used,
            OovPolicy::Strict => self.stores.len(),
        };
        Similarity {
            value: sum / denom as f64,
            comparable: true,
        }
    }
}

/// Mean per-family cosine similarity of two words (or phrases).
pub fn avg_similarity(word_a: &str, word_b: &str, cfg: &SimilarityConfig) -> Similarity {
    cfg.similarity_resolved(&cfg.resolve(word_a), &cfg.resolve(word_b))
}
