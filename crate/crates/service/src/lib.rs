//! HTTP/JSON analysis API: dataset upload and simulation, fits as queued
//! background jobs with live progress, and result retrieval for plotting.

mod api;
mod error;
mod jobs;
mod schema;
mod state;
mod store;
pub mod types;

use std::future::Future;

pub use api::router;
pub use error::ServiceError;
pub use state::{AppState, ServiceConfig};

/// Names of the published response schemas.
pub fn schema_names() -> Vec<&'static str> {
    schema::names()
}

/// Schema text by name, as served under `/schema/{name}`.
pub fn schema(name: &str) -> Option<&'static str> {
    schema::get(name)
}

/// Checks a persisted `index.json` the way startup does. Exposed for the
/// fuzz targets.
#[doc(hidden)]
pub fn decode_index(bytes: &[u8]) -> Result<(), ServiceError> {
    store::Index::decode(bytes).map(drop)
}

/// Serves the API on `listener` until `shutdown` resolves, then drains
/// in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
