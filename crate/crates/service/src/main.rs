use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use clap::Parser;
use rulechat_service::catalog::Catalog;
use rulechat_service::{router, AppState, Config, Engine};

/// Serve rule dialogs over HTTP. Every flag can also be set by environment.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    #[arg(long, env = "RULECHAT_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "RULECHAT_HOST", default_value = "127.0.0.1")]
    host: String,
    /// Session logs are kept under `<data-dir>/sessions`.
    #[arg(long, env = "RULECHAT_DATA_DIR", default_value = "rulechat-data")]
    data_dir: PathBuf,
    /// JSON array of rules (rule_id, title, rule_text, source_url, items).
    #[arg(long, env = "RULECHAT_CATALOG")]
    catalog: PathBuf,
    /// Saved surface LR classifier; the heuristic classifier otherwise.
    #[arg(long, env = "RULECHAT_CLASSIFIER_MODEL")]
    classifier_model: Option<PathBuf>,
    /// Saved entailment model; the heuristic entailer otherwise.
    #[arg(long, env = "RULECHAT_ENTAILMENT_MODEL")]
    entailment_model: Option<PathBuf>,
    /// Built UI assets served at `/`.
    #[arg(long, env = "RULECHAT_STATIC_DIR")]
    static_dir: Option<PathBuf>,
    #[arg(long, env = "RULECHAT_IDLE_TIMEOUT_SECS", default_value_t = 24 * 60 * 60)]
    idle_timeout_secs: u64,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::from_default_env()).init();
    let args = Args::parse();
    let catalog = Catalog::load(&args.catalog)?;
    let engine = Engine::load(args.classifier_model.as_deref(), args.entailment_model.as_deref())?;
    let config = Config { data_dir: args.data_dir, idle_timeout: Duration::from_secs(args.idle_timeout_secs), static_dir: args.static_dir };
    let state = AppState::open(catalog, engine, &config)?;
    let app = router(state, config.static_dir.as_deref());
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {addr}");
    axum::serve(listener, app).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
