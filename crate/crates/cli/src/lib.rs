//! HTTP service for web dialogs: login, dialog rendering with a resolved
//! configuration cache, action dispatch, overrides, administration and
//! metrics.

pub mod cache;
pub mod config;
pub mod error;
pub mod handlers;
pub mod session;
pub mod state;

use std::sync::Arc;

use axum::routing::{get, post, put};
use axum::Router;

pub use config::ServiceConfig;
pub use state::{AppState, Metrics};

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/", get(handlers::index))
        .route("/login", post(handlers::login))
        .route("/logout", post(handlers::logout))
        .route("/dialogs/{name}", get(handlers::get_dialog))
        .route("/dialogs/{name}/actions/{object_id}", post(handlers::invoke_action))
        .route("/overrides", put(handlers::put_override).delete(handlers::delete_override))
        .route("/admin/dialogs", post(handlers::save_dialog))
        .route("/admin/alerts", post(handlers::push_alert))
        .route("/alerts", get(handlers::alerts))
        .route("/history", get(handlers::history))
        .route("/metrics", get(handlers::metrics))
        .route("/static/runtime.js", get(handlers::runtime_js))
        .route("/static/style.css", get(handlers::style_css))
        .with_state(state)
}
