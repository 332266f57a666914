use std::path::PathBuf;
use std::process::ExitCode;

use ccf_core::content::BackendRole;
use ccf_core::pipeline::{
    cmd_build_codebook, cmd_extract, cmd_flops, cmd_fuse_train_eval, cmd_sweep, render_report, DatasetManifest,
    FuseReport, RunConfig, StoreKind, StoreOverrides, SweepAxis, Variant,
};
use ccf_core::{Error, Result};
use clap::{Parser, Subcommand};

/// Context and content features for scene image classification.
#[derive(Parser)]
#[command(name = "ccf", version)]
struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Dataset manifest; overrides `paths.manifest`.
    #[arg(short, long, global = true)]
    manifest: Option<PathBuf>,

    /// Output directory; overrides `paths.out_dir`.
    #[arg(short, long, global = true)]
    out_dir: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the filter-word codebook from the training split.
    BuildCodebook,
    /// Extract one feature kind for every manifest image.
    Extract {
        #[arg(value_parser = parse_kind)]
        kind: StoreKind,
    },
    /// Fuse stored features, grid-search and train the SVM, and evaluate.
    FuseTrainEval {
        #[arg(long)]
        tf: Option<PathBuf>,
        #[arg(long)]
        bf: Option<PathBuf>,
        #[arg(long)]
        ff: Option<PathBuf>,
        /// Number of train/test splits (overrides `classify.runs`).
        #[arg(long)]
        runs: Option<usize>,
        /// Comma-separated variants out of tf, bf, ff, df, ccf.
        #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
        variants: Option<Vec<Variant>>,
    },
    /// Repeat the pipeline over values of one parameter.
    Sweep {
        /// k, agg, scales or lambda.
        #[arg(value_parser = parse_axis)]
        axis: SweepAxis,
        /// Values; a scale set is a comma-separated factor list.
        #[arg(required = true)]
        values: Vec<String>,
    },
    /// Download tag documents for the manifest's images.
    FetchTags {
        /// URL template; `{id}` is replaced by the image id.
        #[arg(long)]
        endpoint: String,
        /// Output JSON-lines file.
        #[arg(long)]
        out: PathBuf,
        /// Raw-response cache directory (default: $CCF_CACHE_DIR/tags).
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        retries: u32,
        /// Minimum milliseconds between requests.
        #[arg(long, default_value_t = 0)]
        interval_ms: u64,
    },
    /// Render a saved evaluation report.
    Report { path: PathBuf },
    /// Convolution FLOPs per configured scale.
    Flops {
        /// Model file, `stub`, or `vgg16` for the built-in layer table.
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value = "foreground", value_parser = parse_role)]
        role: BackendRole,
    },
}

fn parse_kind(s: &str) -> std::result::Result<StoreKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_axis(s: &str) -> std::result::Result<SweepAxis, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_role(s: &str) -> std::result::Result<BackendRole, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cwd = std::env::current_dir().unwrap_or_default();
    if let Some(m) = &cli.manifest {
        cfg.paths.manifest = Some(cwd.join(m));
    }
    if let Some(o) = &cli.out_dir {
        cfg.paths.out_dir = cwd.join(o);
    }
    Ok(cfg)
}

fn load_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    DatasetManifest::load(cfg.manifest_path()?)
}

/// Ok(true) when the command finished but some records failed.
fn run(cli: Cli) -> Result<bool> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::BuildCodebook => {
            let out = cmd_build_codebook(&load_manifest(&cfg)?, &cfg)?;
            println!("{} words -> {}", out.codebook.len(), out.path.display());
            Ok(false)
        }
        Command::Extract { kind } => {
            let out = cmd_extract(&load_manifest(&cfg)?, &cfg, kind)?;
            println!("{} rows x {} -> {}", out.store.len(), out.store.dim, out.path.display());
            if !out.failures.is_empty() {
                eprintln!("{} image(s) failed:", out.failures.len());
                for f in &out.failures {
                    eprintln!("  {}: {}", f.image_id, f.message);
                }
                eprintln!("failure list: {}", out.failures_path().display());
            }
            Ok(!out.failures.is_empty())
        }
        Command::FuseTrainEval {
            tf,
            bf,
            ff,
            runs,
            variants,
        } => {
            if let Some(r) = runs {
                cfg.classify.runs = r;
            }
            if let Some(v) = variants {
                cfg.classify.variants = v;
            }
            cfg.validate()?;
            let out = cmd_fuse_train_eval(&load_manifest(&cfg)?, &cfg, &StoreOverrides { tf, bf, ff })?;
            print!("{}", render_report(&out.report));
            println!("\nreport: {}\nruns:   {}", out.json_path.display(), out.table_path.display());
            Ok(false)
        }
        Command::Sweep { axis, values } => {
            let (table, path) = cmd_sweep(&load_manifest(&cfg)?, &cfg, axis, &values)?;
            print!("{}", table.to_tsv());
            println!("-> {}", path.display());
            Ok(false)
        }
        Command::FetchTags {
            endpoint,
            out,
            cache,
            retries,
            interval_ms,
        } => fetch(&load_manifest(&cfg)?, endpoint, out, cache, retries, interval_ms),
        Command::Report { path } => {
            print!("{}", render_report(&FuseReport::load(path)?));
            Ok(false)
        }
        Command::Flops { model, role } => {
            for (side, flops) in cmd_flops(&cfg, model.as_deref(), role)? {
                println!("{side}\t{flops}\t{:.2} GFLOPs", flops as f64 / 1e9);
            }
            Ok(false)
        }
    }
}

#[cfg(feature = "fetch")]
fn fetch(
    manifest: &DatasetManifest,
    endpoint: String,
    out: PathBuf,
    cache: Option<PathBuf>,
    retries: u32,
    interval_ms: u64,
) -> Result<bool> {
    use std::fs;
    use std::time::Duration;

    use ccf_core::pipeline::fetch::{fetch_manifest_tags, FetchOptions};
    use ccf_core::pipeline::CACHE_DIR_ENV;
    use ccf_core::tags::write_tag_documents;

    let cache_dir = cache.or_else(|| std::env::var_os(CACHE_DIR_ENV).map(|d| PathBuf::from(d).join("tags")));
    let opts = FetchOptions {
        retries,
        min_interval: Duration::from_millis(interval_ms),
        cache_dir,
        ..FetchOptions::default()
    };
    let outcome = fetch_manifest_tags(&endpoint, manifest, &opts)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    write_tag_documents(&out, &outcome.documents)?;
    println!(
        "{} documents ({} cached, {} requests) -> {}",
        outcome.documents.len(),
        outcome.from_cache,
        outcome.requests,
        out.display()
    );
    for f in &outcome.failures {
        eprintln!("  {}: {}", f.image_id, f.message);
    }
    Ok(!outcome.failures.is_empty())
}

#[cfg(not(feature = "fetch"))]
fn fetch(
    _manifest: &DatasetManifest,
    _endpoint: String,
    _out: PathBuf,
    _cache: Option<PathBuf>,
    _retries: u32,
    _interval_ms: u64,
) -> Result<bool> {
    Err(Error::Config("built without tag fetching support".into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
