//! Tag-based context features.
//!
//! Per category, the most frequent training tags are ranked by averaged
//! embedding similarity to the category label and the top `k` form that
//! category's filter bank. The deduplicated union of all banks is the
//! codebook, and an image's context feature is a histogram over codebook words
//! of the tags that are semantically close (similarity ≥ Λ) to each word.
//!
//! Building the codebook costs O(n·m) similarity evaluations for `n`
//! categories and `m` candidates; extracting one feature costs O(|I|·|F|).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::{Family, OovPolicy, Resolved, SimilarityConfig};
use crate::error::{Error, Result};
use crate::tags::{unique_tags, Normalizer, TagDocument};

pub const DEFAULT_CANDIDATES: usize = 500;
pub const DEFAULT_K: usize = 25;
pub const DEFAULT_LAMBDA: f64 = 0.40;

/// Most frequent unique tags of one category, by descending count.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryCandidates {
    pub category: String,
    pub words: Vec<(String, usize)>,
}

/// Counts the pooled tags of one category's training documents.
///
/// The counting vocabulary is the unique-tag set of the pooled tags, so
/// surface variants sharing a root are counted together under the
/// byte-order-first variant.
pub fn top_frequent(
    docs: &[&TagDocument],
    m: usize,
    normalizer: &dyn Normalizer,
) -> Result<CategoryCandidates> {
    let first = docs
        .first()
        .ok_or_else(|| Error::InvalidInput("no documents for candidate counting".into()))?;
    let category = first
        .category
        .clone()
        .ok_or_else(|| Error::InvalidInput(format!("document `{}` has no category", first.image_id)))?;
    if let Some(d) = docs.iter().find(|d| d.category.as_deref() != Some(category.as_str())) {
        return Err(Error::InvalidInput(format!(
            "document `{}` is not in category `{category}`",
            d.image_id
        )));
    }

    // distinct raw tags in first-occurrence order, with occurrence counts
    let mut raw_counts: HashMap<&str, usize> = HashMap::new();
    let mut distinct: Vec<&str> = Vec::new();
    for tag in docs.iter().flat_map(|d| d.tags.iter()) {
        let c = raw_counts.entry(tag.as_str()).or_insert(0);
        if *c == 0 {
            distinct.push(tag);
        }
        *c += 1;
    }
    if distinct.is_empty() {
        return Err(Error::EmptyCategory(category));
    }

    let roots: Vec<String> = distinct.iter().map(|t| normalizer.root(t)).collect();
    let mut root_counts: HashMap<&str, usize> = HashMap::new();
    for (tag, root) in distinct.iter().zip(&roots) {
        *root_counts.entry(root.as_str()).or_insert(0) += raw_counts[tag];
    }
    let vocabulary = unique_tags(&distinct, &roots)?;
    let root_of: HashMap<&str, &str> = distinct
        .iter()
        .copied()
        .zip(roots.iter().map(String::as_str))
        .collect();

    let mut words: Vec<(String, usize)> = vocabulary
        .into_iter()
        .map(|w| {
            let count = root_counts[root_of[w.as_str()]];
            (w, count)
        })
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.as_bytes().cmp(b.0.as_bytes())));
    words.truncate(m);
    Ok(CategoryCandidates { category, words })
}

/// The top-`k` candidates of one category ranked by similarity to its label.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub category: String,
    pub words: Vec<(String, f64)>,
}

pub fn build_filter_bank(
    category: &str,
    cands: &CategoryCandidates,
    k: usize,
    cfg: &SimilarityConfig,
) -> Result<FilterBank> {
    if k == 0 {
        return Err(Error::InvalidInput("filter bank size k must be at least 1".into()));
    }
    let label = cfg.resolve(category);
    if !label.is_known() {
        return Err(Error::UnknownLabel(category.to_string()));
    }
    let mut scored: Vec<(String, f64)> = cands
        .words
        .iter()
        .filter_map(|(w, _)| {
            let s = cfg.similarity_resolved(&label, &cfg.resolve(w));
            s.comparable.then(|| (w.clone(), s.value))
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.0.as_bytes().cmp(b.0.as_bytes()))
    });
    scored.truncate(k);
    Ok(FilterBank {
        category: category.to_string(),
        words: scored,
    })
}

/// Build parameters recorded in the codebook header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookMeta {
    pub categories: usize,
    pub k: usize,
    pub candidates: usize,
    pub lambda: f64,
    pub oov: OovPolicy,
    pub stores: Vec<(Family, String)>,
}

/// Ordered unique filter words; the order is the context-feature bin layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub meta: CodebookMeta,
    words: Vec<String>,
    provenance: Vec<Vec<String>>,
}

const CODEBOOK_MAGIC: &str = "ccf-codebook 1";

impl Codebook {
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Categories whose filter bank contributed `word`.
    pub fn provenance(&self, word: &str) -> Option<&[String]> {
        self.words
            .iter()
            .position(|w| w == word)
            .map(|i| self.provenance[i].as_slice())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.meta;
        writeln!(s, "{CODEBOOK_MAGIC}").unwrap();
        writeln!(s, "categories {}", m.categories).unwrap();
        writeln!(s, "k {}", m.k).unwrap();
        writeln!(s, "candidates {}", m.candidates).unwrap();
        writeln!(s, "lambda {}", m.lambda).unwrap();
        writeln!(s, "oov {}", oov_name(m.oov)).unwrap();
        for (family, digest) in &m.stores {
            writeln!(s, "store {family} {digest}").unwrap();
        }
        writeln!(s, "words {}", self.words.len()).unwrap();
        for (w, cats) in self.words.iter().zip(&self.provenance) {
            writeln!(s, "{w}\t{}", cats.join("\t")).unwrap();
        }
        s
    }

    /// SHA-256 of the text form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|(line, msg)| Error::parse(path, line, msg))
    }

    fn parse(text: &str) -> std::result::Result<Self, (usize, String)> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, CODEBOOK_MAGIC)) => {}
            _ => return Err((1, "not a codebook file".into())),
        }
        let mut meta = CodebookMeta {
            categories: 0,
            k: 0,
            candidates: 0,
            lambda: DEFAULT_LAMBDA,
            oov: OovPolicy::default(),
            stores: Vec::new(),
        };
        let mut expected_words = None;
        for (no, line) in lines.by_ref() {
            let (key, value) = line
                .split_once(' ')
                .ok_or_else(|| (no, format!("malformed header line `{line}`")))?;
            let bad = || (no, format!("bad value for `{key}`"));
            match key {
                "categories" => meta.categories = value.parse().map_err(|_| bad())?,
                "k" => meta.k = value.parse().map_err(|_| bad())?,
                "candidates" => meta.candidates = value.parse().map_err(|_| bad())?,
                "lambda" => meta.lambda = value.parse().map_err(|_| bad())?,
                "oov" => meta.oov = value.parse().map_err(|_| (no, format!("bad oov `{value}`")))?,
                "store" => {
                    let (fam, digest) = value
                        .split_once(' ')
                        .ok_or_else(|| (no, "malformed store line".to_string()))?;
                    let fam: Family = fam.parse().map_err(|_| (no, format!("bad family `{fam}`")))?;
                    meta.stores.push((fam, digest.to_string()));
                }
                "words" => {
                    expected_words = Some(value.parse::<usize>().map_err(|_| bad())?);
                    break;
                }
                other => return Err((no, format!("unknown header key `{other}`"))),
            }
        }
        let expected = expected_words.ok_or((0, "missing `words` line".to_string()))?;
        let mut words = Vec::with_capacity(expected);
        let mut provenance = Vec::with_capacity(expected);
        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let word = fields.next().unwrap_or_default().to_string();
            if words.contains(&word) {
                return Err((no, format!("duplicate word `{word}`")));
            }
            words.push(word);
            provenance.push(fields.map(str::to_string).collect());
        }
        if words.len() != expected {
            return Err((0, format!("expected {expected} words, found {}", words.len())));
        }
        Ok(Codebook {
            meta,
            words,
            provenance,
        })
    }
}

fn oov_name(p: OovPolicy) -> &'static str {
    match p {
        OovPolicy::SkipMissingFamily => "skip-missing-family",
        OovPolicy::Strict => "strict",
    }
}

/// Concatenates banks in order, keeping each word's first occurrence.
pub fn merge_filter_banks(banks: &[FilterBank], meta: CodebookMeta) -> Result<Codebook> {
    if banks.is_empty() {
        return Err(Error::InvalidInput("no filter banks to merge".into()));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut words = Vec::new();
    let mut provenance: Vec<Vec<String>> = Vec::new();
    for bank in banks {
        for (w, _) in &bank.words {
            match index.get(w.as_str()) {
                Some(&i) => {
                    if !provenance[i].contains(&bank.category) {
                        provenance[i].push(bank.category.clone());
                    }
                }
                None => {
                    index.insert(w, words.len());
                    words.push(w.clone());
                    provenance.push(vec![bank.category.clone()]);
                }
            }
        }
    }
    Ok(Codebook {
        meta,
        words,
        provenance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodebookParams {
    pub k: usize,
    pub candidates: usize,
    pub lambda: f64,
}

impl Default for CodebookParams {
    fn default() -> Self {
        CodebookParams {
            k: DEFAULT_K,
            candidates: DEFAULT_CANDIDATES,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

/// Builds the codebook from training documents. Categories are processed in
/// byte order of their labels.
pub fn build_codebook(
    train_docs: &[TagDocument],
    params: &CodebookParams,
    cfg: &SimilarityConfig,
    normalizer: &dyn Normalizer,
) -> Result<Codebook> {
    let mut by_category: BTreeMap<&str, Vec<&TagDocument>> = BTreeMap::new();
    for doc in train_docs {
        let cat = doc.category.as_deref().ok_or_else(|| {
            Error::InvalidInput(format!("training document `{}` has no category", doc.image_id))
        })?;
        by_category.entry(cat).or_default().push(doc);
    }
    if by_category.is_empty() {
        return Err(Error::InvalidInput("no training documents".into()));
    }
    let mut banks = Vec::with_capacity(by_category.len());
    for (cat, docs) in &by_category {
        let cands = top_frequent(docs, params.candidates, normalizer)?;
        let bank = build_filter_bank(cat, &cands, params.k, cfg)?;
        if bank.words.is_empty() {
            return Err(Error::EmptyCategory(cat.to_string()));
        }
        banks.push(bank);
    }
    let meta = CodebookMeta {
        categories: banks.len(),
        k: params.k,
        candidates: params.candidates,
        lambda: params.lambda,
        oov: cfg.policy(),
        stores: cfg.digests(),
    };
    merge_filter_banks(&banks, meta)
}

/// Histogram of one image's tags over the codebook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextFeature {
    pub image_id: String,
    pub bins: Vec<u32>,
}

/// Codebook words resolved once for repeated extraction.
pub struct TfExtractor<'a> {
    words: &'a [String],
    resolved: Vec<Resolved>,
    lambda: f64,
    cfg: &'a SimilarityConfig,
}

impl<'a> TfExtractor<'a> {
    pub fn new(codebook: &'a Codebook, lambda: f64, cfg: &'a SimilarityConfig) -> Self {
        TfExtractor {
            words: codebook.words(),
            resolved: codebook.words().iter().map(|w| cfg.resolve(w)).collect(),
            lambda,
            cfg,
        }
    }

    pub fn extract(&self, doc: &TagDocument) -> ContextFeature {
        let mut bins = vec![0u32; self.words.len()];
        let mut counts: Vec<(&str, u32)> = Vec::new();
        let mut slot: HashMap<&str, usize> = HashMap::new();
        for tag in &doc.tags {
            match slot.get(tag.as_str()) {
                Some(&i) => counts[i].1 += 1,
                None => {
                    slot.insert(tag, counts.len());
                    counts.push((tag, 1));
                }
            }
        }
        for (tag, n) in counts {
            let resolved = self.cfg.resolve(tag);
            for (i, (word, wr)) in self.words.iter().zip(&self.resolved).enumerate() {
                let hit = if word == tag {
                    true
                } else {
                    let s = self.cfg.similarity_resolved(&resolved, wr);
                    s.comparable && s.value >= self.lambda
                };
                if hit {
                    bins[i] += n;
                }
            }
        }
        ContextFeature {
            image_id: doc.image_id.clone(),
            bins,
        }
    }
}

pub fn extract_tf(
    doc: &TagDocument,
    codebook: &Codebook,
    lambda: f64,
    cfg: &SimilarityConfig,
) -> ContextFeature {
    TfExtractor::new(codebook, lambda, cfg).extract(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{EmbeddingStore, Family};
    use crate::tags::DefaultNormalizer;
    use std::sync::Arc;

    fn doc(id: &str, cat: &str, tags: &[&str]) -> TagDocument {
        TagDocument {
            image_id: id.into(),
            tags: tags.iter().map(|s| s.to_string()).collect(),
            category: Some(cat.into()),
            split: None,
        }
    }

    fn unit(angle_deg: f64) -> Vec<f32> {
        let a = angle_deg.to_radians();
        vec![a.cos() as f32, a.sin() as f32]
    }

    /// cos(subway, tram) = 0.9, cos(subway, pizza) = 0.1, cos(train, tram) = 0.8
    fn transit_cfg() -> SimilarityConfig {
        let a_tram = 0.9f64.acos().to_degrees();
        let a_pizza = 0.1f64.acos().to_degrees();
        let a_train = a_tram + 0.8f64.acos().to_degrees();
        let store = EmbeddingStore::from_entries(
            Family::Wv,
            vec![
                ("subway", unit(0.0)),
                ("tram", unit(a_tram)),
                ("pizza", unit(-a_pizza)),
                ("train", unit(a_train)),
            ],
        )
        .unwrap();
        SimilarityConfig::new(vec![Arc::new(store)], OovPolicy::SkipMissingFamily).unwrap()
    }

    fn meta() -> CodebookMeta {
        CodebookMeta {
            categories: 1,
            k: 25,
            candidates: 500,
            lambda: 0.4,
            oov: OovPolicy::SkipMissingFamily,
            stores: vec![],
        }
    }

    #[test]
    fn top_frequent_counts() {
        let n = DefaultNormalizer::new();
        let d1 = doc("1", "subway", &["tram", "tram", "metro"]);
        let d2 = doc("2", "subway", &["tram"]);
        let c = top_frequent(&[&d1, &d2], 500, &n).unwrap();
        assert_eq!(c.words, vec![("tram".into(), 3), ("metro".into(), 1)]);

        let d = doc("1", "x", &["b", "a", "b", "a"]);
        let c = top_frequent(&[&d], 1, &n).unwrap();
        assert_eq!(c.words, vec![("a".into(), 2)]);

        let e = doc("1", "x", &[]);
        assert!(matches!(top_frequent(&[&e], 500, &n), Err(Error::EmptyCategory(_))));
        assert!(top_frequent(&[], 500, &n).is_err());
    }

    #[test]
    fn top_frequent_merges_surface_variants() {
        let n = DefaultNormalizer::new();
        let d = doc("1", "airport", &["planes", "plane", "planes", "tram"]);
        let c = top_frequent(&[&d], 500, &n).unwrap();
        assert_eq!(c.words, vec![("plane".into(), 3), ("tram".into(), 1)]);
    }

    #[test]
    fn filter_bank_ranks_by_similarity() {
        let cfg = transit_cfg();
        let cands = CategoryCandidates {
            category: "subway".into(),
            words: vec![("pizza".into(), 9), ("tram".into(), 1), ("zzz".into(), 5)],
        };
        let bank = build_filter_bank("subway", &cands, 1, &cfg).unwrap();
        assert_eq!(bank.words.len(), 1);
        assert_eq!(bank.words[0].0, "tram");
        assert!((bank.words[0].1 - 0.9).abs() < 1e-6);

        let all = build_filter_bank("subway", &cands, 10, &cfg).unwrap();
        let names: Vec<_> = all.words.iter().map(|w| w.0.as_str()).collect();
        assert_eq!(names, ["tram", "pizza"]);

        assert!(matches!(
            build_filter_bank("nowhere", &cands, 1, &cfg),
            Err(Error::UnknownLabel(_))
        ));
        assert!(build_filter_bank("subway", &cands, 0, &cfg).is_err());
    }

    #[test]
    fn merge_unions_with_provenance() {
        let b1 = FilterBank {
            category: "c1".into(),
            words: vec![("a".into(), 1.0), ("b".into(), 0.5)],
        };
        let b2 = FilterBank {
            category: "c2".into(),
            words: vec![("b".into(), 1.0), ("c".into(), 0.5)],
        };
        let cb = merge_filter_banks(&[b1.clone(), b2], meta()).unwrap();
        assert_eq!(cb.words(), ["a", "b", "c"]);
        assert_eq!(cb.provenance("b").unwrap(), ["c1", "c2"]);

        let single = merge_filter_banks(&[b1], meta()).unwrap();
        assert_eq!(single.words(), ["a", "b"]);
        assert!(merge_filter_banks(&[], meta()).is_err());
    }

    #[test]
    fn merge_without_overlap_has_n_times_k_words() {
        let banks: Vec<FilterBank> = (0..8)
            .map(|c| FilterBank {
                category: format!("cat{c}"),
                words: (0..25).map(|w| (format!("w{c}_{w}"), 1.0)).collect(),
            })
            .collect();
        assert_eq!(merge_filter_banks(&banks, meta()).unwrap().len(), 200);
    }

    #[test]
    fn extract_tf_examples() {
        let cfg = transit_cfg();
        let bank = FilterBank {
            category: "subway".into(),
            words: vec![("tram".into(), 1.0), ("pizza".into(), 0.5)],
        };
        let cb = merge_filter_banks(&[bank], meta()).unwrap();

        let empty = doc("e", "subway", &[]);
        assert_eq!(extract_tf(&empty, &cb, 0.4, &cfg).bins, vec![0, 0]);

        let trams = doc("t", "subway", &["tram", "tram"]);
        assert_eq!(extract_tf(&trams, &cb, 0.4, &cfg).bins, vec![2, 0]);

        let train = doc("r", "subway", &["train"]);
        assert_eq!(extract_tf(&train, &cb, 0.4, &cfg).bins, vec![1, 0]);

        // exact match counts even above any reachable similarity
        assert_eq!(extract_tf(&trams, &cb, 1.5, &cfg).bins, vec![2, 0]);
        assert_eq!(extract_tf(&train, &cb, 1.5, &cfg).bins, vec![0, 0]);
    }

    #[test]
    fn codebook_text_round_trip() {
        let b1 = FilterBank {
            category: "airport inside".into(),
            words: vec![("plane".into(), 1.0), ("terminal".into(), 0.5)],
        };
        let b2 = FilterBank {
            category: "subway".into(),
            words: vec![("tram".into(), 1.0), ("terminal".into(), 0.5)],
        };
        let mut m = meta();
        m.stores = vec![(Family::Wv, "ab12".into())];
        let cb = merge_filter_banks(&[b1, b2], m).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("codebook.txt");
        cb.save(&p).unwrap();
        let back = Codebook::load(&p).unwrap();
        assert_eq!(back, cb);
        assert_eq!(back.provenance("terminal").unwrap(), ["airport inside", "subway"]);
    }
}
