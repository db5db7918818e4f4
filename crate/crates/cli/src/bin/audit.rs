//! Audit session manager. Every command prints JSON on stdout; failures
//! print `{"error": code, "message": text}` on stderr and exit with 1.

use std::io::Read;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rla_service::{router, Interpretations, ServiceError, SessionConfig, SessionStore};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "audit", about = "Run risk-limiting audit sessions")]
struct Cli {
    /// Directory holding one JSON file per session.
    #[arg(long, default_value = "sessions", global = true)]
    dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a session from a JSON config file (`-` for stdin).
    New {
        config: PathBuf,
    },
    /// Deal up to `count` selections, or repeat the ones still pending.
    Draw {
        id: String,
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// Submit interpretations from a JSON file (`-` for stdin).
    Record {
        id: String,
        file: PathBuf,
    },
    Status {
        id: String,
    },
    /// Stop sampling and send the contest to a full hand count.
    Escalate {
        id: String,
    },
    List,
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> anyhow::Result<T> {
    let mut text = String::new();
    if path.as_os_str() == "-" {
        std::io::stdin().read_to_string(&mut text)?;
    } else {
        text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    }
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn to_value<T: serde::Serialize>(v: T) -> anyhow::Result<Value> {
    Ok(serde_json::to_value(v)?)
}

async fn serve(store: SessionStore, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<Option<Value>> {
    let store = SessionStore::open(&cli.dir)?;
    Ok(Some(match cli.command {
        Command::New { config } => {
            let config: SessionConfig = read_json(&config)?;
            to_value(store.create(config)?)?
        }
        Command::Draw { id, count } => {
            let pending = store.draw(&id, count)?;
            json!({ "session_id": id, "pending": pending })
        }
        Command::Record { id, file } => {
            let batch: Interpretations = read_json(&file)?;
            to_value(store.record(&id, &batch)?)?
        }
        Command::Status { id } => to_value(store.status(&id)?)?,
        Command::Escalate { id } => to_value(store.escalate(&id)?)?,
        Command::List => json!({ "sessions": store.list()? }),
        Command::Serve { addr } => {
            tokio::runtime::Runtime::new()?.block_on(serve(store, addr))?;
            return Ok(None);
        }
    }))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Some(v)) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("JSON value"));
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, message) = match e.downcast_ref::<ServiceError>() {
                Some(se) => (se.code(), se.to_string()),
                None => ("error", format!("{e:#}")),
            };
            eprintln!("{}", json!({ "error": code, "message": message }));
            ExitCode::FAILURE
        }
    }
}
