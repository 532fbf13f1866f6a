//! Stateless HTTP JSON API over the monitoring core.
//!
//! Every endpoint is a pure function of its request body. Numerical work
//! runs on the blocking thread pool so slow requests never stall the
//! listener.

pub mod api;
pub mod error;

use std::net::SocketAddr;

use axum::extract::DefaultBodyLimit;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use api::Body;
pub use error::{ApiError, ErrorBody};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Clone)]
pub struct Options {
    /// Origins allowed by CORS; empty allows any origin.
    pub cors_origins: Vec<String>,
    pub body_limit: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self { cors_origins: Vec::new(), body_limit: 256 * 1024 }
    }
}

async fn blocking<T, F>(f: F) -> api::Reply<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json),
        Err(e) => Err(ApiError::internal(format!("worker failed: {e}"))),
    }
}

async fn decision(Body(req): Body<api::DecisionRequest>) -> api::Reply<api::DecisionResponse> {
    blocking(move || api::decision(&req)).await
}

async fn whatif(Body(req): Body<api::WhatIfRequest>) -> api::Reply<api::WhatIfResponse> {
    blocking(move || api::whatif(&req)).await
}

async fn boundary_table(Body(req): Body<api::BoundaryTableRequest>) -> api::Reply<tox2::BoundaryTable> {
    blocking(move || api::boundary_table(&req)).await
}

async fn oc(Body(req): Body<api::OcRequest>) -> api::Reply<api::OcResponse> {
    blocking(move || api::oc(&req)).await
}

async fn calibrate(Body(req): Body<api::CalibrateRequest>) -> api::Reply<api::CalibrateResponse> {
    blocking(move || api::calibrate(&req)).await
}

async fn health() -> Json<api::Health> {
    Json(api::health())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

fn cors(opts: &Options) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods([Method::GET, Method::POST]).allow_headers(Any);
    if opts.cors_origins.is_empty() {
        return layer.allow_origin(Any);
    }
    let origins: Vec<HeaderValue> = opts.cors_origins.iter().filter_map(|o| o.parse().ok()).collect();
    layer.allow_origin(AllowOrigin::list(origins))
}

pub fn router(opts: &Options) -> Router {
    Router::new()
        .route("/api/v1/decision", post(decision))
        .route("/api/v1/whatif", post(whatif))
        .route("/api/v1/boundary-table", post(boundary_table))
        .route("/api/v1/oc", post(oc))
        .route("/api/v1/calibrate", post(calibrate))
        .route("/api/v1/health", get(health))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(opts.body_limit))
        .layer(cors(opts))
}

/// Serves on an already bound listener until interrupted.
pub async fn serve(listener: TcpListener, opts: Options) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(&opts))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await
}

/// Binds `addr` and serves on a fresh multi-threaded runtime.
pub fn run(addr: &str, opts: Options) -> std::io::Result<()> {
    let addr: SocketAddr = addr
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("bind address {addr:?}: {e}")))?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move { serve(TcpListener::bind(addr).await?, opts).await })
}
