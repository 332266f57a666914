//! Stage orchestration: manifests, configuration, feature stores and the
//! codebook → TF → FF/BF → fuse → train → evaluate commands.

mod commands;
mod config;
#[cfg(feature = "fetch")]
pub mod fetch;
mod manifest;
mod report;
mod store;

pub use commands::{
    cmd_build_codebook, cmd_extract, cmd_flops, cmd_fuse_train_eval, cmd_sweep, codebook_location, ensure_codebook,
    ensure_store, load_similarity, load_stoplist, store_location, CodebookOutcome, ExtractOutcome, Failure,
    FuseOutcome, StoreOverrides, SweepAxis, SweepRow, SweepTable,
};
pub use config::{
    ClassifyConfig, CodebookConfig, ContentConfig, EmbeddingRef, PathsConfig, RunConfig, StoreKind, Variant,
    CACHE_DIR_ENV,
};
pub use manifest::{documents_digest, DatasetManifest, ManifestRecord};
pub use report::{render_report, Coverage, FuseReport, RunRecord, StoreInfo, VariantReport};
pub use store::FeatureStore;
