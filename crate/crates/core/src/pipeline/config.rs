use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::classify::{GridSpec, DEFAULT_FOLDS};
use crate::content::{Aggregation, BackendRole, ScaleSet, DEFAULT_BASE_SIDE, DEFAULT_SCALES, STUB_MODEL};
use crate::context::{CodebookParams, DEFAULT_CANDIDATES, DEFAULT_K, DEFAULT_LAMBDA};
use crate::embed::{Family, OovPolicy};
use crate::error::{Error, Result};

/// Directory searched for relative model and embedding paths before the
/// config file's own directory.
pub const CACHE_DIR_ENV: &str = "CCF_CACHE_DIR";

/// Feature combinations evaluated by `fuse-train-eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Context features alone.
    Tf,
    /// Background features alone.
    Bf,
    /// Foreground features alone.
    Ff,
    /// Background + foreground.
    Df,
    /// Context + background + foreground.
    Ccf,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Tf => "tf",
            Variant::Bf => "bf",
            Variant::Ff => "ff",
            Variant::Df => "df",
            Variant::Ccf => "ccf",
        }
    }

    pub fn kinds(self) -> &'static [StoreKind] {
        match self {
            Variant::Tf => &[StoreKind::Tf],
            Variant::Bf => &[StoreKind::Bf],
            Variant::Ff => &[StoreKind::Ff],
            Variant::Df => &[StoreKind::Bf, StoreKind::Ff],
            Variant::Ccf => &[StoreKind::Tf, StoreKind::Bf, StoreKind::Ff],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tf" => Ok(Variant::Tf),
            "bf" => Ok(Variant::Bf),
            "ff" => Ok(Variant::Ff),
            "df" => Ok(Variant::Df),
            "ccf" => Ok(Variant::Ccf),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// The three persisted feature kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    Tf,
    Bf,
    Ff,
}

impl StoreKind {
    pub const ALL: [StoreKind; 3] = [StoreKind::Tf, StoreKind::Bf, StoreKind::Ff];

    pub fn as_str(self) -> &'static str {
        match self {
            StoreKind::Tf => "tf",
            StoreKind::Bf => "bf",
            StoreKind::Ff => "ff",
        }
    }

    pub fn role(self) -> Option<BackendRole> {
        match self {
            StoreKind::Tf => None,
            StoreKind::Bf => Some(BackendRole::Background),
            StoreKind::Ff => Some(BackendRole::Foreground),
        }
    }
}

impl fmt::Display for StoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tf" => Ok(StoreKind::Tf),
            "bf" => Ok(StoreKind::Bf),
            "ff" => Ok(StoreKind::Ff),
            other => Err(Error::Config(format!("unknown feature kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRef {
    pub family: Family,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: Option<PathBuf>,
    /// Default tag-document file for records without their own `tag_doc`.
    pub tags: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub embeddings: Vec<EmbeddingRef>,
    pub foreground_model: Option<String>,
    pub background_model: Option<String>,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            manifest: None,
            tags: None,
            stopwords: None,
            embeddings: Vec::new(),
            foreground_model: None,
            background_model: None,
            out_dir: PathBuf::from("ccf-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    pub k: usize,
    pub candidates: usize,
    pub lambda: f64,
    pub oov: OovPolicy,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        CodebookConfig {
            k: DEFAULT_K,
            candidates: DEFAULT_CANDIDATES,
            lambda: DEFAULT_LAMBDA,
            oov: OovPolicy::default(),
        }
    }
}

impl CodebookConfig {
    pub fn params(&self) -> CodebookParams {
        CodebookParams {
            k: self.k,
            candidates: self.candidates,
            lambda: self.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContentConfig {
    pub scales: Vec<f64>,
    pub base_side: usize,
    pub aggregation: Aggregation,
    /// Extraction worker threads; all cores when absent.
    pub workers: Option<usize>,
}

impl Default for ContentConfig {
    fn default() -> Self {
        ContentConfig {
            scales: DEFAULT_SCALES.to_vec(),
            base_side: DEFAULT_BASE_SIDE,
            aggregation: Aggregation::Max,
            workers: None,
        }
    }
}

impl ContentConfig {
    pub fn scale_set(&self) -> Result<ScaleSet> {
        ScaleSet::new(self.scales.clone(), self.base_side).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub folds: usize,
    /// Number of train/test splits. One run uses the manifest split; more
    /// runs draw stratified splits with the manifest's per-class train sizes.
    pub runs: usize,
    pub confidence: f64,
    pub variants: Vec<Variant>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        let grid = GridSpec::paper();
        ClassifyConfig {
            c: grid.c,
            gamma: grid.gamma,
            folds: DEFAULT_FOLDS,
            runs: 1,
            confidence: 0.95,
            variants: vec![Variant::Tf, Variant::Df, Variant::Ccf],
        }
    }
}

impl ClassifyConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.c.clone(), self.gamma.clone())
    }
}

/// Every tunable of a run. Relative paths are resolved against the directory
/// of the config file (or [`CACHE_DIR_ENV`] for models and embeddings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub codebook: CodebookConfig,
    pub content: ContentConfig,
    pub classify: ClassifyConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            paths: PathsConfig::default(),
            codebook: CodebookConfig::default(),
            content: ContentConfig::default(),
            classify: ClassifyConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if cfg.base_dir.as_os_str().is_empty() {
            cfg.base_dir = PathBuf::from(".");
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cb = &self.codebook;
        if cb.k == 0 || cb.candidates == 0 {
            return Err(Error::Config("codebook.k and codebook.candidates must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&cb.lambda) {
            return Err(Error::Config(format!("codebook.lambda {} outside [-1, 1]", cb.lambda)));
        }
        self.content.scale_set()?;
        self.classify.grid()?;
        if self.classify.folds < 2 {
            return Err(Error::Config("classify.folds must be at least 2".into()));
        }
        if self.classify.runs == 0 {
            return Err(Error::Config("classify.runs must be at least 1".into()));
        }
        if !(self.classify.confidence > 0.0 && self.classify.confidence < 1.0) {
            return Err(Error::Config("classify.confidence must lie in (0, 1)".into()));
        }
        if self.classify.variants.is_empty() {
            return Err(Error::Config("classify.variants is empty".into()));
        }
        if self.content.workers == Some(0) {
            return Err(Error::Config("content.workers must be positive".into()));
        }
        Ok(())
    }

    /// A data path relative to the config directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// A model or embedding path: the cache directory wins when it holds the file.
    pub fn resolve_asset(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        if let Some(dir) = std::env::var_os(CACHE_DIR_ENV) {
            let candidate = Path::new(&dir).join(p);
            if candidate.exists() {
                return candidate;
            }
        }
        self.base_dir.join(p)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.paths.out_dir)
    }

    pub fn manifest_path(&self) -> Result<PathBuf> {
        self.paths
            .manifest
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::Config("paths.manifest is not set".into()))
    }

    /// Model reference for a content kind; [`STUB_MODEL`] passes through.
    pub fn model_ref(&self, role: BackendRole) -> Result<PathBuf> {
        let (key, value) = match role {
            BackendRole::Foreground => ("foreground_model", &self.paths.foreground_model),
            BackendRole::Background => ("background_model", &self.paths.background_model),
        };
        let value = value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("paths.{key} is not set")))?;
        Ok(if value == STUB_MODEL {
            PathBuf::from(STUB_MODEL)
        } else {
            self.resolve_asset(Path::new(value))
        })
    }

    pub fn embedding_paths(&self) -> Vec<(Family, PathBuf)> {
        self.paths
            .embeddings
            .iter()
            .map(|e| (e.family, self.resolve_asset(&e.path)))
            .collect()
    }

    /// Identifies everything the codebook depends on. `train_digest` covers
    /// the training documents actually used.
    pub fn codebook_hash(&self, train_digest: &str) -> String {
        let embeddings: Vec<_> = self
            .embedding_paths()
            .into_iter()
            .map(|(f, p)| json!([f.as_str(), p.to_string_lossy()]))
            .collect();
        hash_value(&json!({
            "stage": "codebook",
            "k": self.codebook.k,
            "candidates": self.codebook.candidates,
            "lambda": self.codebook.lambda,
            "oov": self.codebook.oov,
            "embeddings": embeddings,
            "stopwords": self.paths.stopwords.as_deref().map(|p| self.resolve(p).to_string_lossy().into_owned()),
            "train": train_digest,
        }))
    }

    pub fn tf_hash(&self, codebook_hash: &str) -> String {
        hash_value(&json!({
            "stage": "tf",
            "codebook": codebook_hash,
            "lambda": self.codebook.lambda,
        }))
    }

    pub fn content_hash(&self, role: BackendRole) -> Result<String> {
        Ok(hash_value(&json!({
            "stage": "content",
            "role": role,
            "model": self.model_ref(role)?.to_string_lossy(),
            "scales": self.content.scales,
            "base_side": self.content.base_side,
            "aggregation": self.content.aggregation,
        })))
    }

    /// Hash of the evaluation settings, combined with the input store hashes.
    pub fn report_hash(&self, store_hashes: &[&str]) -> String {
        hash_value(&json!({
            "stage": "report",
            "stores": store_hashes,
            "seed": self.seed,
            "classify": self.classify,
        }))
    }
}

pub(crate) fn hash_value(v: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.codebook.k, 25);
        assert_eq!(cfg.codebook.lambda, 0.40);
        assert_eq!(cfg.content.scales.len(), 6);
        assert_eq!(cfg.content.aggregation, Aggregation::Max);
        assert_eq!(cfg.classify.c.len(), 206);
        assert_eq!(cfg.classify.gamma.len(), 7);
    }

    #[test]
    fn round_trip() {
        let text = r#"
seed = 7
[paths]
manifest = "m.csv"
embeddings = [{ family = "gv", path = "glove.txt" }]
foreground_model = "stub"
[codebook]
k = 10
oov = "strict"
[content]
scales = [1.0]
aggregation = "mean"
[classify]
c = [1.0]
gamma = [0.1]
variants = ["ccf"]
"#;
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.codebook.oov, OovPolicy::Strict);
        assert_eq!(cfg.content.aggregation, Aggregation::Mean);
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::parse("[codebook]\nk = 0").is_err());
        assert!(RunConfig::parse("[content]\nscales = []").is_err());
        assert!(RunConfig::parse("[classify]\nfolds = 1").is_err());
        assert!(RunConfig::parse("bogus = 1").is_err());
    }

    #[test]
    fn stage_hashes_track_their_inputs() {
        let mut a = RunConfig::default();
        a.paths.foreground_model = Some("stub".into());
        let mut b = a.clone();
        b.codebook.k = 10;
        assert_ne!(a.codebook_hash("t"), b.codebook_hash("t"));
        assert_eq!(
            a.content_hash(BackendRole::Foreground).unwrap(),
            b.content_hash(BackendRole::Foreground).unwrap()
        );
        b.content.aggregation = Aggregation::Min;
        assert_ne!(
            a.content_hash(BackendRole::Foreground).unwrap(),
            b.content_hash(BackendRole::Foreground).unwrap()
        );
        assert!(a.content_hash(BackendRole::Background).is_err());
    }
}
