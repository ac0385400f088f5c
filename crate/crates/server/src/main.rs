//! `expertloop-server`: serve the HTTP surface over a file-backed event log
//! and drive timers from the wall clock.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use expertloop::clock::SystemClock;
use expertloop::config::{Deployment, LlmProviderKind};
use expertloop::eventlog::FileLog;
use expertloop::llm::CompletionProvider;
use expertloop::service::{Providers, Service, ServiceError};
use expertloop_server::{router, App, HttpSink, LogSink, OpenAiProvider, Opener, OutboundSink};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "expertloop-server", about = "HTTP service for the expert-in-the-loop chatbot")]
struct Cli {
    /// Deployment config (TOML). Defaults to the bundled deployment.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Event log path; overrides the config's log path.
    #[arg(long)]
    log: Option<PathBuf>,
    /// POST every outbound payload here; without it payloads are only logged.
    #[arg(long)]
    sink_url: Option<String>,
    /// Scheduler resolution in seconds.
    #[arg(long, default_value_t = 30)]
    tick_secs: u64,
}

type Setup = Result<(Arc<App>, Cli), String>;

fn setup(cli: Cli) -> Setup {
    let cfg = match &cli.config {
        Some(p) => Deployment::load(p).map_err(|e| e.to_string())?,
        None => Deployment::bundled(),
    };
    let log_path = cli
        .log
        .clone()
        .or_else(|| cfg.paths.log_path.clone())
        .unwrap_or_else(|| PathBuf::from("expertloop.log"));
    let llm: Option<Arc<dyn CompletionProvider>> = match cfg.providers.llm {
        LlmProviderKind::Mock => None,
        LlmProviderKind::OpenaiCompatible => {
            let oc = cfg.providers.openai.as_ref().ok_or("providers.openai is required for openai-compatible")?;
            Some(Arc::new(OpenAiProvider::from_config(oc).map_err(|e| e.to_string())?))
        }
    };
    let sink: Arc<dyn OutboundSink> = match &cli.sink_url {
        Some(url) => Arc::new(HttpSink::new(url.clone()).map_err(|e| e.to_string())?),
        None => Arc::new(LogSink),
    };
    if cfg.admin_token.is_none() {
        tracing::warn!("no admin_token configured; admin routes will refuse every request");
    }
    let opener: Opener = Box::new(move |now| {
        let providers = match &llm {
            Some(llm) => Providers::mock_with_llm(&cfg, llm.clone())?,
            None => Providers::mock(&cfg)?,
        };
        let log = FileLog::open(&log_path)?;
        Service::open(cfg.clone(), providers, Box::new(log), now)
    });
    let app = App::new(opener, Arc::new(SystemClock), sink).map_err(|e: ServiceError| e.to_string())?;
    Ok((app, cli))
}

async fn serve(app: Arc<App>, cli: Cli) -> std::io::Result<()> {
    let ticker = app.clone();
    let period = Duration::from_secs(cli.tick_secs.max(1));
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            interval.tick().await;
            let app = ticker.clone();
            match tokio::task::spawn_blocking(move || app.tick()).await {
                Ok(Ok(())) => {}
                Ok(Err(e)) => tracing::error!(error = %e, "scheduler tick failed"),
                Err(e) => tracing::error!(error = %e, "scheduler tick panicked"),
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(cli.listen).await?;
    tracing::info!(addr = %cli.listen, "listening");
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    // Blocking HTTP clients are built before the async runtime exists.
    let (app, cli) = match setup(Cli::parse()) {
        Ok(v) => v,
        Err(e) => {
            tracing::error!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            tracing::error!("starting runtime: {e}");
            return ExitCode::FAILURE;
        }
    };
    match runtime.block_on(serve(app, cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
