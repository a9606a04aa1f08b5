//! HTTP facade over the annotation queue.
//!
//! Every route is mounted under `/api/v1` and, as an alias, `/api`. Handlers
//! only translate between JSON and [`QueueStore`] calls; all labeling rules
//! live in `dosewatch_core::annotate`.

mod api;
mod view;

use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::http::{HeaderValue, Method};
use axum::Router;
use dosewatch_core::annotate::{QueueConfig, QueueStore};
use dosewatch_core::normalize::SlangLexicon;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::{ServeDir, ServeFile};

pub use api::{api_routes, ApiError};
pub use view::{
    DecisionBody, DecisionResponse, Highlight, HighlightKind, ItemView, RoundProgress, StatsView, SuggestionView,
    VocabView,
};

pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid service config: {0}")]
    Config(String),
    #[error(transparent)]
    Annotate(#[from] dosewatch_core::annotate::AnnotateError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApiConfig {
    pub bind: IpAddr,
    pub port: u16,
    /// Directory holding the queue's event log and snapshot.
    pub store: PathBuf,
    /// Built review UI, served at `/` when set.
    pub static_dir: Option<PathBuf>,
    /// Allowed CORS origins; `*` allows any.
    pub cors_origins: Vec<String>,
    pub queue: QueueConfig,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            bind: IpAddr::from([127, 0, 0, 1]),
            port: 8080,
            store: PathBuf::from("queue"),
            static_dir: None,
            cors_origins: Vec::new(),
            queue: QueueConfig::default(),
        }
    }
}

impl ApiConfig {
    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }

    /// Checks the port, creates the store directory if needed and probes
    /// that it is writable.
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.port == 0 {
            return Err(ServiceError::Config("port must be between 1 and 65535".into()));
        }
        check_writable(&self.store)?;
        if let Some(dir) = &self.static_dir {
            if !dir.is_dir() {
                return Err(ServiceError::Config(format!("static dir {} does not exist", dir.display())));
            }
        }
        for origin in &self.cors_origins {
            if origin != "*" && HeaderValue::from_str(origin).is_err() {
                return Err(ServiceError::Config(format!("bad CORS origin {origin:?}")));
            }
        }
        Ok(())
    }
}

fn check_writable(dir: &Path) -> Result<(), ServiceError> {
    fs::create_dir_all(dir)
        .map_err(|e| ServiceError::Config(format!("store path {} is not usable: {e}", dir.display())))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"")
        .and_then(|_| fs::remove_file(&probe))
        .map_err(|e| ServiceError::Config(format!("store path {} is not writable: {e}", dir.display())))
}

/// Shared handler state. The mutex makes the store the single owner of
/// every mutation; reads take the same lock and so see one consistent
/// snapshot.
#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<QueueStore>>,
    lexicon: Arc<SlangLexicon>,
}

impl AppState {
    pub fn new(store: QueueStore, lexicon: SlangLexicon) -> Self {
        AppState {
            store: Arc::new(Mutex::new(store)),
            lexicon: Arc::new(lexicon),
        }
    }

    /// Locks the store. A handler that panicked mid-request cannot leave
    /// it half-updated, since every mutation is one appended event.
    pub fn store(&self) -> MutexGuard<'_, QueueStore> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn lexicon(&self) -> &SlangLexicon {
        &self.lexicon
    }
}

/// API routes under both prefixes, without static files or CORS.
pub fn router(state: AppState) -> Router {
    Router::new()
        .nest(API_PREFIX, api_routes())
        .nest("/api", api_routes())
        .with_state(state)
}

/// The full application: API, optional UI assets and CORS.
pub fn app(state: AppState, config: &ApiConfig) -> Router {
    let mut app = router(state);
    if let Some(dir) = &config.static_dir {
        let index = ServeFile::new(dir.join("index.html"));
        app = app.fallback_service(ServeDir::new(dir).fallback(index));
    }
    if !config.cors_origins.is_empty() {
        let origins = if config.cors_origins.iter().any(|o| o == "*") {
            AllowOrigin::any()
        } else {
            AllowOrigin::list(config.cors_origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
        };
        let cors = CorsLayer::new()
            .allow_origin(origins)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([axum::http::header::CONTENT_TYPE]);
        app = app.layer(cors);
    }
    app
}

/// Opens the queue store named in the config.
pub fn open_state(config: &ApiConfig, lexicon: SlangLexicon, vocab: dosewatch_core::SymptomVocabulary) -> Result<AppState, ServiceError> {
    config.validate()?;
    let store = QueueStore::open(&config.store, config.queue.clone(), vocab)?;
    Ok(AppState::new(store, lexicon))
}

pub async fn serve(config: ApiConfig, state: AppState) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(config.addr()).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app(state, &config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Runs [`serve`] on a fresh runtime until Ctrl-C.
pub fn run_blocking(config: ApiConfig, state: AppState) -> Result<(), ServiceError> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(serve(config, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ApiConfig {
            store: dir.path().join("q"),
            ..ApiConfig::default()
        };
        cfg.validate().unwrap();
        assert!(cfg.store.is_dir());
        cfg.port = 0;
        assert!(cfg.validate().is_err());
        cfg.port = 80;
        cfg.static_dir = Some(dir.path().join("missing"));
        assert!(cfg.validate().is_err());
        cfg.static_dir = None;
        cfg.cors_origins = vec!["bad\norigin".into()];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_from_json_uses_defaults() {
        let cfg: ApiConfig = serde_json::from_str(r#"{"port": 9000}"#).unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.addr().to_string(), "127.0.0.1:9000");
        assert_eq!(cfg.queue, QueueConfig::default());
    }
}
