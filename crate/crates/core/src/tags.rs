//! Tag cleaning: tokenization, stopword removal, root normalization, the
//! root-grouped unique-tag extraction used for the codebook vocabulary, and
//! ingest of per-image tag documents.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const ENGLISH_LEMMAS: &str = include_str!("../data/lemmas_en.tsv");

/// Lowercases `text` and splits it on every non-alphabetic character.
/// Fragments shorter than two characters are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

/// A set of lowercase stopwords with a content hash for reports.
#[derive(Debug, Clone)]
pub struct Stoplist {
    words: HashSet<String>,
    digest: String,
}

impl Stoplist {
    /// The shipped English list.
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// One word per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Stoplist {
            words,
            digest: hex::encode(Sha256::digest(text.as_bytes())),
        }
    }

    pub fn empty() -> Self {
        Self::parse("")
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }
}

pub fn remove_stopwords(tokens: Vec<String>, stoplist: &Stoplist) -> Vec<String> {
    tokens.into_iter().filter(|t| !stoplist.contains(t)).collect()
}

/// Maps a lowercase tag to the root used to group its surface variants.
pub trait Normalizer: Send + Sync {
    fn root(&self, tag: &str) -> String;
}

/// Irregular-form lemma table followed by the Snowball English stemmer.
pub struct DefaultNormalizer {
    lemmas: HashMap<&'static str, &'static str>,
    stemmer: Stemmer,
}

impl DefaultNormalizer {
    pub fn new() -> Self {
        let lemmas = ENGLISH_LEMMAS
            .lines()
            .filter_map(|l| l.split_once('\t'))
            .collect();
        DefaultNormalizer {
            lemmas,
            stemmer: Stemmer::create(Algorithm::English),
        }
    }

    pub fn lemma_count(&self) -> usize {
        self.lemmas.len()
    }
}

impl Default for DefaultNormalizer {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for DefaultNormalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DefaultNormalizer")
            .field("lemmas", &self.lemmas.len())
            .finish()
    }
}

impl Normalizer for DefaultNormalizer {
    fn root(&self, tag: &str) -> String {
        let lemma = self.lemmas.get(tag).copied().unwrap_or(tag);
        self.stemmer.stem(lemma).into_owned()
    }
}

pub fn normalize_root(tag: &str, normalizer: &dyn Normalizer) -> String {
    normalizer.root(tag)
}

/// Unique tags of a raw list given the positionally aligned roots.
///
/// Every position emits the byte-order minimum of the raw tags sharing its
/// root; repeated emissions are dropped keeping first occurrence. This is the
/// grouped O(N log N) equivalent of the pairwise scan.
pub fn unique_tags<R, S>(raw: &[R], roots: &[S]) -> Result<Vec<String>>
where
    R: AsRef<str>,
    S: AsRef<str>,
{
    if raw.len() != roots.len() {
        return Err(Error::InvalidInput(format!(
            "raw tags ({}) and roots ({}) differ in length",
            raw.len(),
            roots.len()
        )));
    }
    let mut min_by_root: HashMap<&str, &str> = HashMap::new();
    for (r, s) in raw.iter().zip(roots) {
        let r = r.as_ref();
        min_by_root
            .entry(s.as_ref())
            .and_modify(|m| {
                if r.as_bytes() < m.as_bytes() {
                    *m = r;
                }
            })
            .or_insert(r);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in roots {
        let pick = min_by_root[s.as_ref()];
        if seen.insert(pick) {
            out.push(pick.to_string());
        }
    }
    Ok(out)
}

/// Convenience wrapper computing roots with `normalizer`.
pub fn unique_tags_with(raw: &[String], normalizer: &dyn Normalizer) -> Vec<String> {
    let roots: Vec<String> = raw.iter().map(|t| normalizer.root(t)).collect();
    unique_tags(raw, &roots).expect("roots are aligned by construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split `{other}`"))),
        }
    }
}

/// Pre-processed tags standing for one image. Duplicates carry frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagDocument {
    pub image_id: String,
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(alias = "id")]
    image_id: Option<String>,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    split: Option<Split>,
}

/// Reads a JSON-lines tag-document file. Each tag string may hold free text
/// (an annotation or description); it is tokenized and stopword-filtered and
/// the resulting tokens are concatenated in order.
pub fn ingest_tag_documents(path: impl AsRef<Path>, stoplist: &Stoplist) -> Result<Vec<TagDocument>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut index = 0usize;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        index += 1;
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            index,
            message: format!("malformed record: {e}"),
        })?;
        let image_id = raw
            .image_id
            .filter(|id| !id.trim().is_empty())
            .ok_or_else(|| Error::Record {
                index,
                message: "missing image_id".into(),
            })?;
        let tags = raw
            .tags
            .iter()
            .flat_map(|t| remove_stopwords(tokenize(t), stoplist))
            .collect();
        docs.push(TagDocument {
            image_id,
            tags,
            category: raw.category,
            split: raw.split,
        });
    }
    Ok(docs)
}

pub fn write_tag_documents(path: impl AsRef<Path>, docs: &[TagDocument]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for doc in docs {
        serde_json::to_writer(&mut out, doc).expect("tag documents serialize");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}
