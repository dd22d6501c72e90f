use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use scriptorium_server::worker::{self, Fetcher};
use scriptorium_server::{app, open_platform, AppState, Config};
use tracing_subscriber::EnvFilter;

/// Collaborative annotation platform for digitised document images.
///
/// Configuration is read from `SCRIPTORIUM_*` environment variables; see
/// the README for the full list.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve the HTTP API and run the background worker (default).
    Serve,
    /// Create an account in the configured store.
    CreateUser {
        #[arg(long)]
        email: String,
        #[arg(long, default_value = "")]
        name: String,
        #[arg(long, env = "SCRIPTORIUM_PASSWORD", hide_env_values = true)]
        password: String,
        /// Staff accounts may create projects and (de)activate users.
        #[arg(long)]
        staff: bool,
    },
    /// Print a long-lived API token for an existing account.
    IssueToken {
        #[arg(long)]
        email: String,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let cli = Cli::parse();
    let config = match Config::from_env() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let result = match cli.command.unwrap_or(Command::Serve) {
        Command::Serve => serve(config),
        Command::CreateUser { email, name, password, staff } => open_platform(&config)
            .and_then(|p| p.register_user(&email, &name, &password, staff))
            .map(|u| println!("{}", serde_json::to_string_pretty(&u).expect("profile serializes")))
            .map_err(|e| e.to_string()),
        Command::IssueToken { email } => open_platform(&config)
            .and_then(|p| {
                let user = p.user_by_email(&email)?;
                p.issue_api_token(user.user_id)
            })
            .map(|t| println!("{}", t.token))
            .map_err(|e| e.to_string()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn serve(config: Config) -> Result<(), String> {
    if config.storage.is_none() {
        tracing::warn!("SCRIPTORIUM_STORAGE is unset; state is kept in memory only");
    }
    let platform = Arc::new(open_platform(&config).map_err(|e| e.to_string())?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(config.listen)
            .await
            .map_err(|e| format!("cannot listen on {}: {e}", config.listen))?;
        tracing::info!("listening on {}", config.listen);
        let (stop, stopped) = tokio::sync::watch::channel(false);
        let fetcher = Fetcher::new(config.fetch_timeout, config.max_manifest_bytes);
        let worker = tokio::spawn(worker::run(
            Arc::clone(&platform),
            fetcher,
            config.worker_interval,
            config.sweep_interval,
            stopped,
        ));
        let router = app(AppState::new(platform, config));
        let served = axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                tracing::info!("shutting down");
            })
            .await
            .map_err(|e| e.to_string());
        let _ = stop.send(true);
        let _ = worker.await;
        served
    })
}
