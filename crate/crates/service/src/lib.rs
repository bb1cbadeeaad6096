//! HTTP facade over the localization pipeline: frame browsing, patch
//! curation, augmentation and scene previews, and localization.

mod error;
mod frames;
mod routes;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::Router;
use pedloc_core::gridnet::{Checkpoint, NetworkParams};
use pedloc_core::PatchLibrary;
use tokio::net::TcpListener;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

pub use error::{ApiError, ServiceError};
pub use frames::{FrameInfo, FrameStore};
pub use routes::{
    AugmentPreviewRequest, LocalizeMethod, LocalizeParams, LocalizeRequest, LocalizeResponse, NewPatchRequest,
    NewPatchResponse, PatchInfo, SceneSpec, SynthPreviewRequest, SynthPreviewResponse, TruthBox,
};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub port: u16,
    pub frames: PathBuf,
    pub patches: PathBuf,
    pub checkpoint: Option<PathBuf>,
    /// Directory with the built curator bundle, served under `/ui`.
    pub ui_dir: Option<PathBuf>,
}

/// Shared state. The library is the only mutable part.
#[derive(Clone)]
pub struct AppState {
    pub frames: Arc<FrameStore>,
    pub library: Arc<RwLock<PatchLibrary>>,
    pub model: Option<Arc<NetworkParams<f32>>>,
}

impl AppState {
    pub fn new(frames: FrameStore, library: PatchLibrary, model: Option<NetworkParams<f32>>) -> Self {
        Self {
            frames: Arc::new(frames),
            library: Arc::new(RwLock::new(library)),
            model: model.map(Arc::new),
        }
    }

    /// Loads frames, the patch library and the optional checkpoint named by `cfg`.
    pub fn open(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let frames = FrameStore::open(&cfg.frames)?;
        if !cfg.patches.is_dir() {
            return Err(ServiceError::Config(format!(
                "patch library directory {} does not exist",
                cfg.patches.display()
            )));
        }
        let library = PatchLibrary::open_or_create(&cfg.patches).map_err(|e| ServiceError::Config(e.to_string()))?;
        for w in library.warnings() {
            log::warn!("{w}");
        }
        let model = match &cfg.checkpoint {
            Some(path) => Some(Checkpoint::load(path).map_err(|e| ServiceError::Config(e.to_string()))?.params),
            None => None,
        };
        Ok(Self::new(frames, library, model))
    }
}

pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any);
    let mut app = routes::api().with_state(state);
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app.layer(cors)
}

/// Binds `0.0.0.0:port`; port 0 picks a free port.
pub async fn bind(port: u16) -> Result<TcpListener, ServiceError> {
    TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port)))
        .await
        .map_err(|source| ServiceError::Bind { port, source })
}

/// Serves until `shutdown` resolves, then lets in-flight requests finish.
pub async fn serve(
    cfg: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let state = AppState::open(&cfg)?;
    let listener = bind(cfg.port).await?;
    log::info!(
        "serving {} frames and {} patches on {}",
        state.frames.len(),
        state.library.read().expect("library lock poisoned").len(),
        listener.local_addr()?
    );
    axum::serve(listener, router(state, cfg.ui_dir.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Blocking entry point that stops on Ctrl-C.
pub fn run(cfg: ServiceConfig) -> Result<(), ServiceError> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(serve(cfg, async {
        let _ = tokio::signal::ctrl_c().await;
    }))
}
