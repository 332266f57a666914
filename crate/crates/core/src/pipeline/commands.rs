use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{RunConfig, StoreKind, Variant};
use super::manifest::{documents_digest, DatasetManifest};
use super::report::{Coverage, FuseReport, RunRecord, StoreInfo, VariantReport};
use super::store::FeatureStore;
use crate::classify::{evaluate, grid_search, train_svm, EvalReport, SvmModel, SvmParams};
use crate::content::{
    decode_image, flops_for_layers, load_backend, multiscale_features, vgg16_pool5, Aggregation, Backend,
    BackendRole,
};
use crate::context::{build_codebook, Codebook, TfExtractor};
use crate::embed::{load_embeddings, SimilarityConfig};
use crate::error::{Error, Result};
use crate::fusion::{BlockKind, FeatureBlocks, FusionModel};
use crate::tags::{DefaultNormalizer, Split, Stoplist, TagDocument};

fn short(hash: &str) -> &str {
    &hash[..16.min(hash.len())]
}

pub fn load_stoplist(cfg: &RunConfig) -> Result<Stoplist> {
    match &cfg.paths.stopwords {
        Some(p) => Stoplist::from_path(cfg.resolve(p)),
        None => Ok(Stoplist::english()),
    }
}

pub fn load_similarity(cfg: &RunConfig) -> Result<SimilarityConfig> {
    let paths = cfg.embedding_paths();
    if paths.is_empty() {
        return Err(Error::Config("paths.embeddings is empty".into()));
    }
    let stores = paths
        .into_iter()
        .map(|(family, path)| load_embeddings(&path, family).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    SimilarityConfig::new(stores, cfg.codebook.oov)
}

fn documents(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<(Vec<TagDocument>, Vec<String>)> {
    let default = cfg.paths.tags.as_deref().map(|p| cfg.resolve(p));
    manifest.tag_documents(default.as_deref(), &load_stoplist(cfg)?)
}

fn training_documents(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<Vec<TagDocument>> {
    let (docs, missing) = documents(manifest, cfg)?;
    let train: HashSet<&str> = manifest.split(Split::Train).map(|r| r.image_id.as_str()).collect();
    let missing_train = missing.iter().filter(|id| train.contains(id.as_str())).count();
    if missing_train > 0 {
        log::warn!("{missing_train} training image(s) have no tag document");
    }
    Ok(docs.into_iter().filter(|d| d.split == Some(Split::Train)).collect())
}

/// Hash and file location of the codebook the current configuration implies.
pub fn codebook_location(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<(String, PathBuf)> {
    let docs = training_documents(manifest, cfg)?;
    let hash = cfg.codebook_hash(&documents_digest(&docs));
    let path = cfg.out_dir().join(format!("codebook-{}.txt", short(&hash)));
    Ok((hash, path))
}

/// Hash and file location of the store of `kind` the current configuration implies.
pub fn store_location(manifest: &DatasetManifest, cfg: &RunConfig, kind: StoreKind) -> Result<(String, PathBuf)> {
    let hash = match kind.role() {
        None => cfg.tf_hash(&codebook_location(manifest, cfg)?.0),
        Some(role) => cfg.content_hash(role)?,
    };
    let path = cfg.out_dir().join(format!("{kind}-{}.ccf", short(&hash)));
    Ok((hash, path))
}

fn write_config_sidecar(cfg: &RunConfig, output: &Path) -> Result<()> {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".config.toml");
    let path = output.with_file_name(name);
    fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone)]
pub struct CodebookOutcome {
    pub codebook: Codebook,
    pub path: PathBuf,
    pub hash: String,
}

/// Builds the codebook from the training split and writes it under `out_dir`.
pub fn cmd_build_codebook(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<CodebookOutcome> {
    let docs = training_documents(manifest, cfg)?;
    if docs.is_empty() {
        return Err(Error::InvalidInput("no training documents with tags".into()));
    }
    let hash = cfg.codebook_hash(&documents_digest(&docs));
    let path = cfg.out_dir().join(format!("codebook-{}.txt", short(&hash)));
    let sim = load_similarity(cfg)?;
    let codebook = build_codebook(&docs, &cfg.codebook.params(), &sim, &DefaultNormalizer::new())?;
    fs::create_dir_all(cfg.out_dir()).map_err(|e| Error::io(cfg.out_dir(), e))?;
    codebook.save(&path)?;
    write_config_sidecar(cfg, &path)?;
    log::info!("codebook: {} words -> {}", codebook.len(), path.display());
    Ok(CodebookOutcome { codebook, path, hash })
}

/// Reuses the codebook for the current configuration when it exists.
pub fn ensure_codebook(manifest: &DatasetManifest, cfg: &RunConfig) -> Result<CodebookOutcome> {
    let (hash, path) = codebook_location(manifest, cfg)?;
    if path.exists() {
        return Ok(CodebookOutcome {
            codebook: Codebook::load(&path)?,
            path,
            hash,
        });
    }
    cmd_build_codebook(manifest, cfg)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub image_id: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExtractOutcome {
    pub kind: StoreKind,
    pub path: PathBuf,
    pub store: FeatureStore,
    pub failures: Vec<Failure>,
}

impl ExtractOutcome {
    pub fn failures_path(&self) -> PathBuf {
        failures_path(&self.path)
    }
}

fn failures_path(store: &Path) -> PathBuf {
    store.with_extension("failures.tsv")
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Extracts one feature kind for every manifest record. Records that fail are
/// listed (and written next to the store) instead of aborting the batch.
pub fn cmd_extract(manifest: &DatasetManifest, cfg: &RunConfig, kind: StoreKind) -> Result<ExtractOutcome> {
    let (hash, path) = store_location(manifest, cfg, kind)?;
    let (store, results) = match kind.role() {
        None => extract_context(manifest, cfg, &hash)?,
        Some(role) => extract_content(manifest, cfg, role, &hash)?,
    };
    let mut store = store;
    let mut failures = Vec::new();
    for (id, result) in results {
        match result {
            Ok(row) => store.push(&id, &row)?,
            Err(e) => failures.push(Failure {
                image_id: id,
                message: e.to_string(),
            }),
        }
    }
    store.write(&path)?;
    write_config_sidecar(cfg, &path)?;
    let fpath = failures_path(&path);
    if failures.is_empty() {
        let _ = fs::remove_file(&fpath);
    } else {
        let mut text = String::from("image_id\terror\n");
        for f in &failures {
            writeln!(text, "{}\t{}", f.image_id, f.message.replace(['\t', '\n'], " ")).unwrap();
        }
        fs::write(&fpath, text).map_err(|e| Error::io(&fpath, e))?;
        log::warn!("{kind}: {} image(s) failed, see {}", failures.len(), fpath.display());
    }
    log::info!("{kind}: {} rows x {} -> {}", store.len(), store.dim, path.display());
    Ok(ExtractOutcome {
        kind,
        path,
        store,
        failures,
    })
}

type RowResults = Vec<(String, Result<Vec<f32>>)>;

fn extract_context(manifest: &DatasetManifest, cfg: &RunConfig, hash: &str) -> Result<(FeatureStore, RowResults)> {
    let (_, cb_path) = codebook_location(manifest, cfg)?;
    if !cb_path.exists() {
        return Err(Error::StageMismatch(format!(
            "no codebook for this configuration at {}; run build-codebook first",
            cb_path.display()
        )));
    }
    let codebook = Codebook::load(&cb_path)?;
    let sim = load_similarity(cfg)?;
    let (docs, _) = documents(manifest, cfg)?;
    let by_id: BTreeMap<&str, &TagDocument> = docs.iter().map(|d| (d.image_id.as_str(), d)).collect();
    let extractor = TfExtractor::new(&codebook, cfg.codebook.lambda, &sim);
    let results = in_pool(cfg.content.workers, || {
        manifest
            .records()
            .par_iter()
            .map(|r| {
                let row = match by_id.get(r.image_id.as_str()) {
                    Some(doc) => Ok(extractor.extract(doc).bins.iter().map(|&b| b as f32).collect()),
                    None => Err(Error::InvalidInput("no tag document".into())),
                };
                (r.image_id.clone(), row)
            })
            .collect()
    })?;
    let store = FeatureStore::new(StoreKind::Tf, codebook.len(), hash)
        .with_meta("codebook", codebook.digest())
        .with_meta("lambda", cfg.codebook.lambda.to_string());
    Ok((store, results))
}

fn extract_content(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    role: BackendRole,
    hash: &str,
) -> Result<(FeatureStore, RowResults)> {
    let backend: Box<dyn Backend> = load_backend(cfg.model_ref(role)?, role)?;
    let scales = cfg.content.scale_set()?;
    let agg = cfg.content.aggregation;
    let results = in_pool(cfg.content.workers, || {
        manifest
            .records()
            .par_iter()
            .map(|r| {
                let row = decode_image(&r.image)
                    .and_then(|img| multiscale_features(&r.image_id, &img, backend.as_ref(), &scales, agg))
                    .map(|f| f.vec.iter().map(|&v| v as f32).collect());
                (r.image_id.clone(), row)
            })
            .collect()
    })?;
    let store = FeatureStore::new(role_kind(role), crate::content::TAPPED_CHANNELS, hash)
        .with_meta("backend", backend.fingerprint())
        .with_meta("aggregation", agg.as_str())
        .with_meta("sides", scales.sides().iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
    Ok((store, results))
}

fn role_kind(role: BackendRole) -> StoreKind {
    match role {
        BackendRole::Foreground => StoreKind::Ff,
        BackendRole::Background => StoreKind::Bf,
    }
}

/// Reuses the store for the current configuration when present and intact.
pub fn ensure_store(manifest: &DatasetManifest, cfg: &RunConfig, kind: StoreKind) -> Result<FeatureStore> {
    let (hash, path) = store_location(manifest, cfg, kind)?;
    if path.exists() {
        if let Ok(store) = FeatureStore::read(&path) {
            if store.config_hash == hash && store.kind == kind {
                return Ok(store);
            }
        }
    }
    Ok(cmd_extract(manifest, cfg, kind)?.store)
}

/// Explicit store files; unset kinds use the configuration's default location.
#[derive(Debug, Clone, Default)]
pub struct StoreOverrides {
    pub tf: Option<PathBuf>,
    pub bf: Option<PathBuf>,
    pub ff: Option<PathBuf>,
}

impl StoreOverrides {
    fn get(&self, kind: StoreKind) -> Option<&Path> {
        match kind {
            StoreKind::Tf => self.tf.as_deref(),
            StoreKind::Bf => self.bf.as_deref(),
            StoreKind::Ff => self.ff.as_deref(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FuseOutcome {
    pub report: FuseReport,
    pub json_path: PathBuf,
    pub table_path: PathBuf,
}

fn block_kind(kind: StoreKind) -> BlockKind {
    match kind {
        StoreKind::Tf => BlockKind::TF,
        StoreKind::Bf => BlockKind::BF,
        StoreKind::Ff => BlockKind::FF,
    }
}

/// Train/test row indices for each run. A single run keeps the manifest
/// split; repeated runs re-draw a stratified split per run that preserves the
/// manifest's per-class training counts.
fn run_splits(labels: &[usize], splits: &[Split], runs: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let manifest_split = || {
        let train = (0..labels.len()).filter(|&i| splits[i] == Split::Train).collect();
        let test = (0..labels.len()).filter(|&i| splits[i] == Split::Test).collect();
        (train, test)
    };
    if runs == 1 {
        return vec![manifest_split()];
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    (0..runs)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for c in 0..n_classes {
                let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
                let n_train = rows.iter().filter(|&&i| splits[i] == Split::Train).count();
                rows.shuffle(&mut rng);
                train.extend_from_slice(&rows[..n_train]);
                test.extend_from_slice(&rows[n_train..]);
            }
            train.sort_unstable();
            test.sort_unstable();
            (train, test)
        })
        .collect()
}

#[derive(Serialize)]
struct SavedModel<'a> {
    variant: Variant,
    run: usize,
    fusion: &'a FusionModel,
    svm: &'a SvmModel,
}

/// Standardize → PCA → fuse → grid search → train → evaluate, for every
/// configured variant over the same loaded stores.
pub fn cmd_fuse_train_eval(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    overrides: &StoreOverrides,
) -> Result<FuseOutcome> {
    let mut kinds: Vec<StoreKind> = cfg.classify.variants.iter().flat_map(|v| v.kinds().iter().copied()).collect();
    kinds.sort();
    kinds.dedup();

    let mut stores = BTreeMap::new();
    let mut infos = BTreeMap::new();
    for &kind in &kinds {
        let (hash, default_path) = store_location(manifest, cfg, kind)?;
        let path = overrides.get(kind).map(Path::to_path_buf).unwrap_or(default_path);
        if !path.exists() {
            return Err(Error::StageMismatch(format!(
                "no {kind} store at {}; run `extract {kind}` first",
                path.display()
            )));
        }
        let store = FeatureStore::read(&path)?;
        if store.kind != kind {
            return Err(Error::StageMismatch(format!("{} holds {} features, expected {kind}", path.display(), store.kind)));
        }
        if store.config_hash != hash {
            return Err(Error::StageMismatch(format!(
                "{} was produced by a different configuration (hash {}, expected {})",
                path.display(),
                short(&store.config_hash),
                short(&hash)
            )));
        }
        infos.insert(
            kind.to_string(),
            StoreInfo {
                path: path.to_string_lossy().into_owned(),
                config_hash: store.config_hash.clone(),
                digest: store.digest(),
                dim: store.dim,
                rows: store.len(),
            },
        );
        stores.insert(kind, store);
    }

    let mut missing: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut used = Vec::new();
    for r in manifest.records() {
        let mut ok = true;
        for (kind, store) in &stores {
            if store.get(&r.image_id).is_none() {
                missing.entry(kind.to_string()).or_default().push(r.image_id.clone());
                ok = false;
            }
        }
        if ok {
            used.push(r);
        }
    }
    let ids: Vec<&str> = used.iter().map(|r| r.image_id.as_str()).collect();
    let labels: Vec<usize> = used
        .iter()
        .map(|r| manifest.class_index(&r.category).expect("manifest category"))
        .collect();
    let splits: Vec<Split> = used.iter().map(|r| r.split).collect();
    let matrices: BTreeMap<StoreKind, Array2<f64>> = stores
        .iter()
        .map(|(k, s)| Ok((*k, s.matrix(&ids)?)))
        .collect::<Result<_>>()?;
    let all = |kinds: &[StoreKind]| {
        FeatureBlocks::new(
            ids.iter().map(|s| s.to_string()).collect(),
            kinds.iter().map(|k| (block_kind(*k), matrices[k].clone())).collect(),
        )
    };

    let store_hashes: Vec<&str> = infos.values().map(|i| i.config_hash.as_str()).collect();
    let report_hash = cfg.report_hash(&store_hashes);
    let out_dir = cfg.out_dir();
    let model_dir = out_dir.join(format!("models-{}", short(&report_hash)));
    fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;

    let grid = cfg.classify.grid()?;
    let run_sets = run_splits(&labels, &splits, cfg.classify.runs, cfg.seed);
    let mut variants = Vec::new();
    for &variant in &cfg.classify.variants {
        let blocks = all(variant.kinds())?;
        let mut records = Vec::new();
        let mut metrics = Vec::new();
        let mut fused_dim = 0;
        for (run, (train, test)) in run_sets.iter().enumerate() {
            if train.is_empty() || test.is_empty() {
                return Err(Error::InvalidInput(format!("run {run}: empty train or test split")));
            }
            let (tr, te) = (blocks.select(train), blocks.select(test));
            let fusion = FusionModel::fit(&tr)?;
            fused_dim = fusion.output_dim();
            let x_train = fusion.transform(&tr)?;
            let x_test = fusion.transform_held_out(&te)?;
            let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let y_test: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
            let run_seed = cfg.seed.wrapping_add(run as u64);
            let search = grid_search(&x_train, &y_train, &grid, cfg.classify.folds, run_seed)?;
            let svm = train_svm(&x_train, &y_train, SvmParams::new(search.best_c, search.best_gamma))?
                .with_labels(manifest.categories().to_vec())?;
            metrics.push(evaluate(&svm, &x_test, &y_test)?);
            records.push(RunRecord {
                run,
                n_train: train.len(),
                n_test: test.len(),
                c: search.best_c,
                gamma: search.best_gamma,
                cv_accuracy: search.best_accuracy,
            });
            let model_path = model_dir.join(format!("{variant}-run{run}.json"));
            let saved = SavedModel {
                variant,
                run,
                fusion: &fusion,
                svm: &svm,
            };
            fs::write(&model_path, serde_json::to_vec(&saved).expect("model serializes"))
                .map_err(|e| Error::io(&model_path, e))?;
            log::info!(
                "{variant} run {run}: C={} gamma={} accuracy {:.4}",
                search.best_c,
                search.best_gamma,
                metrics.last().unwrap().accuracy
            );
        }
        variants.push(VariantReport {
            variant,
            fused_dim,
            runs: records,
            summary: EvalReport::from_runs(metrics, cfg.classify.confidence)?,
        });
    }

    let report = FuseReport {
        report_hash: report_hash.clone(),
        seed: cfg.seed,
        labels: manifest.categories().to_vec(),
        stores: infos,
        coverage: Coverage {
            records: manifest.len(),
            used: used.len(),
            missing,
        },
        variants,
        config: cfg.clone(),
    };
    let json_path = out_dir.join(format!("report-{}.json", short(&report_hash)));
    let table_path = out_dir.join(format!("report-{}.tsv", short(&report_hash)));
    fs::write(&json_path, report.to_json()).map_err(|e| Error::io(&json_path, e))?;
    fs::write(&table_path, report.runs_table()).map_err(|e| Error::io(&table_path, e))?;
    Ok(FuseOutcome {
        report,
        json_path,
        table_path,
    })
}

/// Parameter varied by [`cmd_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    Aggregation,
    Scales,
    Lambda,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::Aggregation => "agg",
            SweepAxis::Scales => "scales",
            SweepAxis::Lambda => "lambda",
        }
    }

    /// A copy of `cfg` with this axis set to `value`. Scale sets are
    /// comma-separated factor lists.
    pub fn apply(self, cfg: &RunConfig, value: &str) -> Result<RunConfig> {
        let bad = || Error::Config(format!("bad {} value `{value}`", self.as_str()));
        let mut out = cfg.clone();
        match self {
            SweepAxis::K => out.codebook.k = value.parse().map_err(|_| bad())?,
            SweepAxis::Lambda => out.codebook.lambda = value.parse().map_err(|_| bad())?,
            SweepAxis::Aggregation => out.content.aggregation = Aggregation::from_str(value)?,
            SweepAxis::Scales => {
                out.content.scales = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<_>>()?
            }
        }
        out.validate()?;
        Ok(out)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepAxis::K),
            "agg" | "aggregation" => Ok(SweepAxis::Aggregation),
            "scales" => Ok(SweepAxis::Scales),
            "lambda" => Ok(SweepAxis::Lambda),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub variant: Variant,
    pub fused_dim: usize,
    pub codebook_size: Option<usize>,
    pub accuracy: f64,
    pub halfwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub axis: &'static str,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\tvariant\tfused_dim\tcodebook_size\taccuracy\thalfwidth\n", self.axis);
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}\t{}",
                r.value,
                r.variant,
                r.fused_dim,
                r.codebook_size.map_or("-".into(), |n| n.to_string()),
                r.accuracy,
                r.halfwidth.map_or("-".into(), |h| format!("{h:.6}"))
            )
            .unwrap();
        }
        out
    }
}

/// Runs the full pipeline once per value of `axis`, reusing every stage whose
/// inputs the axis does not touch.
pub fn cmd_sweep(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    axis: SweepAxis,
    values: &[String],
) -> Result<(SweepTable, PathBuf)> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut rows = Vec::new();
    for value in values {
        let run_cfg = axis.apply(cfg, value)?;
        let needs: HashSet<StoreKind> = run_cfg
            .classify
            .variants
            .iter()
            .flat_map(|v| v.kinds().iter().copied())
            .collect();
        let mut codebook_size = None;
        if needs.contains(&StoreKind::Tf) {
            codebook_size = Some(ensure_codebook(manifest, &run_cfg)?.codebook.len());
        }
        for kind in StoreKind::ALL {
            if needs.contains(&kind) {
                ensure_store(manifest, &run_cfg, kind)?;
            }
        }
        let outcome = cmd_fuse_train_eval(manifest, &run_cfg, &StoreOverrides::default())?;
        for v in &outcome.report.variants {
            rows.push(SweepRow {
                value: value.clone(),
                variant: v.variant,
                fused_dim: v.fused_dim,
                codebook_size,
                accuracy: v.summary.mean_accuracy(),
                halfwidth: v.summary.accuracy.map(|i| i.halfwidth),
            });
        }
    }
    let table = SweepTable {
        axis: axis.as_str(),
        rows,
    };
    let path = cfg.out_dir().join(format!("sweep-{}.tsv", axis.as_str()));
    fs::write(&path, table.to_tsv()).map_err(|e| Error::io(&path, e))?;
    Ok((table, path))
}

/// Forward-pass cost at each configured scale. `model` is a backend reference
/// or `vgg16` for the built-in layer table.
pub fn cmd_flops(cfg: &RunConfig, model: Option<&str>, role: BackendRole) -> Result<Vec<(usize, u64)>> {
    let layers = match model {
        None | Some("vgg16") => vgg16_pool5(),
        Some(m) => load_backend(cfg.resolve_asset(Path::new(m)), role)?.layers()?,
    };
    cfg.content
        .scale_set()?
        .sides()
        .into_iter()
        .map(|side| Ok((side, flops_for_layers(&layers, side)?)))
        .collect()
}
