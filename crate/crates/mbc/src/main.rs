use std::fs::File;
use std::io::{self, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mbc_core::analysis;
use mbc_core::embedding::EmbeddingStore;
use mbc_core::imagery::load_corpus;
use mbc_core::imagery::remote::{BehanceSource, VisionLabeler};
use mbc_core::session::{run_script, DirStorage, NullStorage, SessionScript, SessionStorage};
use mbc_core::{Config, Services};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "mbc", version, about = "Mood board composer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Replay a session script and print its log as JSON Lines.
    Run(RunArgs),
    /// Convergence series and summary statistics for a session log.
    Analyze(AnalyzeArgs),
    /// Inspect embedding files.
    Embeddings {
        #[command(subcommand)]
        command: EmbeddingsCommand,
    },
}

#[derive(Args)]
struct Backends {
    /// Word embedding text file ("N M" header, then one word and M floats per line).
    #[arg(long, env = "MBC_EMBEDDINGS")]
    embeddings: PathBuf,
    /// Read only the first N words of the embedding file.
    #[arg(long)]
    limit: Option<usize>,
    /// Fixture corpus manifest. Without it the remote search and labeling
    /// services are used (MBC_BEHANCE_KEY and MBC_VISION_KEY must be set).
    #[arg(long, env = "MBC_CORPUS")]
    corpus: Option<PathBuf>,
    /// JSON config file.
    #[arg(long, env = "MBC_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    backends: Backends,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Persist sessions (meta, log, journal, exports) under this directory.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Session script (JSON).
    #[arg(long)]
    script: PathBuf,
    #[command(flatten)]
    backends: Backends,
    /// Persist the session directory under this root as well.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Session log (JSON Lines).
    #[arg(long)]
    log: PathBuf,
    #[arg(long, env = "MBC_EMBEDDINGS")]
    embeddings: PathBuf,
    #[arg(long)]
    limit: Option<usize>,
    /// Config whose position weights the sessions used.
    #[arg(long, env = "MBC_CONFIG")]
    config: Option<PathBuf>,
    /// Also write the series as CSV (session_id, iteration_i, cos_sim).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EmbeddingsCommand {
    /// Vocabulary size, dimension and normalization check.
    Info {
        file: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
        /// Print these words' nearest neighbours.
        #[arg(long, num_args = 1..)]
        neighbours: Vec<String>,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve(args) => serve(args),
        Command::Run(args) => run(args),
        Command::Analyze(args) => analyze(args),
        Command::Embeddings {
            command:
                EmbeddingsCommand::Info {
                    file,
                    limit,
                    neighbours,
                },
        } => embeddings_info(&file, limit, &neighbours),
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn load_store(path: &Path, limit: Option<usize>) -> Result<Arc<EmbeddingStore>> {
    let started = std::time::Instant::now();
    let store = EmbeddingStore::load(path, limit)
        .with_context(|| format!("loading embeddings {}", path.display()))?;
    tracing::info!(words = store.len(), dim = store.dim(), elapsed = ?started.elapsed(), "embeddings loaded");
    Ok(Arc::new(store))
}

struct Loaded {
    services: Services,
    corpus: Option<Arc<mbc_core::imagery::CorpusManifest>>,
    config: Config,
}

fn load_backends(b: &Backends) -> Result<Loaded> {
    let config = load_config(b.config.as_deref())?;
    let store = load_store(&b.embeddings, b.limit)?;
    match &b.corpus {
        Some(path) => {
            let corpus = Arc::new(
                load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))?,
            );
            Ok(Loaded {
                services: Services::fixture(store, corpus.clone(), config.labels_per_image),
                corpus: Some(corpus),
                config,
            })
        }
        None => {
            let (Some(source), Some(labeler)) = (
                BehanceSource::from_env(),
                VisionLabeler::from_env(config.labels_per_image),
            ) else {
                bail!("no --corpus given and MBC_BEHANCE_KEY / MBC_VISION_KEY are not both set");
            };
            Ok(Loaded {
                services: Services {
                    store,
                    source: Arc::new(source),
                    labeler: Arc::new(labeler),
                },
                corpus: None,
                config,
            })
        }
    }
}

fn serve(args: ServeArgs) -> Result<()> {
    let loaded = load_backends(&args.backends)?;
    let mut state = mbc::AppState::new(loaded.services, loaded.config);
    if let Some(corpus) = loaded.corpus {
        state = state.with_corpus(corpus);
    }
    if let Some(dir) = &args.data_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        state = state.with_data_dir(dir);
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .context("invalid --host/--port")?;
    let app = mbc::router(Arc::new(state));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn run(args: RunArgs) -> Result<()> {
    let mut script = SessionScript::load(&args.script)
        .with_context(|| format!("reading script {}", args.script.display()))?;
    let loaded = load_backends(&args.backends)?;
    if script.config.is_none() {
        script.config = Some(loaded.config.clone());
    }
    let storage: Box<dyn SessionStorage> = match &args.data_dir {
        Some(dir) => Box::new(DirStorage::create(dir, &script.session_id())?),
        None => Box::new(NullStorage),
    };
    let session = run_script(&loaded.services, &script, storage)?;
    io::stdout().write_all(session.log_jsonl().as_bytes())?;
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let store = load_store(&args.embeddings, args.limit)?;
    let file = File::open(&args.log).with_context(|| format!("opening {}", args.log.display()))?;
    let records = analysis::parse_log(BufReader::new(file))?;
    if records.is_empty() {
        bail!("{} contains no records", args.log.display());
    }
    let series = analysis::all_series(&records, &store, &config.position_weights)?;
    let summary = analysis::summarize(&series);
    if let Some(path) = &args.csv {
        let out = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        analysis::write_csv(&series, out)?;
    }
    let report = serde_json::json!({ "series": series, "summary": summary });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn embeddings_info(file: &Path, limit: Option<usize>, neighbours: &[String]) -> Result<()> {
    let store = load_store(file, limit)?;
    println!("words: {}", store.len());
    println!("dimension: {}", store.dim());
    println!("max |norm - 1|: {:.3e}", store.max_norm_deviation());
    let sample: Vec<&str> = store.vocab().iter().take(5).map(String::as_str).collect();
    println!("first words: {}", sample.join(", "));
    for word in neighbours {
        let v = store.vector_of(word)?;
        let exclude = [word.clone()].into_iter().collect();
        let top = store.most_similar(&[v], &[], 10, &exclude)?;
        let shown: Vec<String> = top
            .iter()
            .map(|r| format!("{} {:.4}", r.word, r.score))
            .collect();
        println!("{word}: {}", shown.join(", "));
    }
    Ok(())
}
