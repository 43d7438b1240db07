#![allow(dead_code)]

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::extract::ConnectInfo;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;
use webdialog_cli::{router, AppState, Metrics, ServiceConfig};
use webdialog_core::conf::Right;

pub const LOCAL: IpAddr = IpAddr::V4(Ipv4Addr::LOCALHOST);
pub const OTHER: IpAddr = IpAddr::V4(Ipv4Addr::new(10, 0, 0, 9));

pub const ROOT: (&str, &str) = ("root", "root-secret");
pub const ALICE: (&str, &str) = ("alice", "alice-secret");

pub const DIALOGS: [&str; 3] = ["customers", "hello", "orders"];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub struct Harness {
    pub state: Arc<AppState>,
    pub app: Router,
    pub dir: TempDir,
}

pub struct Reply {
    pub status: StatusCode,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or(Value::Null)
    }
}

/// A template directory holding the fixture dialogs.
pub fn template_dir() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixtures().join("dialogs")).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    dir
}

pub fn config(dir: &Path) -> ServiceConfig {
    let mut config = ServiceConfig::new(dir);
    config.seed = Some(fixtures().join("seed.sql"));
    config.procedures = Some(fixtures().join("procedures.txt"));
    config
}

impl Harness {
    /// Fixture dialogs compiled and registered, `root` (admin) and `alice`
    /// granted open on every dialog.
    pub fn new() -> Self {
        let h = Self::cold();
        for name in DIALOGS {
            h.state.compiled(name).unwrap();
        }
        h
    }

    /// Users and grants only; nothing compiled yet.
    pub fn cold() -> Self {
        let dir = template_dir();
        Self::with_config(dir, |_| {})
    }

    pub fn with_config(dir: TempDir, tweak: impl FnOnce(&mut ServiceConfig)) -> Self {
        let mut cfg = config(dir.path());
        tweak(&mut cfg);
        let state = AppState::build(cfg).unwrap();
        let conf = &state.conf;
        conf.create_user(ROOT.0, "Root", true, ROOT.1).unwrap();
        conf.create_user(ALICE.0, "Alice", false, ALICE.1).unwrap();
        for name in DIALOGS {
            conf.grant(name, ROOT.0, Right::Open, None).unwrap();
            conf.grant(name, ALICE.0, Right::Open, None).unwrap();
        }
        Harness { app: router(Arc::clone(&state)), state, dir }
    }

    pub fn metrics(&self) -> Metrics {
        self.state.metrics()
    }

    pub async fn send(
        &self,
        method: Method,
        uri: &str,
        token: Option<&str>,
        body: Option<Value>,
        from: IpAddr,
    ) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let body = match body {
            Some(v) => {
                req = req.header(header::CONTENT_TYPE, "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let mut req = req.body(body).unwrap();
        req.extensions_mut().insert(ConnectInfo(SocketAddr::new(from, 40000)));
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        Reply { status, body: String::from_utf8_lossy(&bytes).into_owned() }
    }

    pub async fn get(&self, uri: &str, token: &str) -> Reply {
        self.send(Method::GET, uri, Some(token), None, LOCAL).await
    }

    pub async fn login_from(&self, user: (&str, &str), from: IpAddr) -> Reply {
        let body = serde_json::json!({ "user_id": user.0, "secret": user.1 });
        self.send(Method::POST, "/login", None, Some(body), from).await
    }

    pub async fn login(&self, user: (&str, &str)) -> String {
        let reply = self.login_from(user, LOCAL).await;
        assert_eq!(reply.status, StatusCode::OK, "login failed: {}", reply.body);
        reply.json()["token"].as_str().unwrap().to_string()
    }

    pub async fn put_override(&self, token: &str, body: Value) -> Reply {
        self.send(Method::PUT, "/overrides", Some(token), Some(body), LOCAL).await
    }

    pub async fn action(&self, token: &str, dialog: &str, button: &str, params: Value) -> Reply {
        let uri = format!("/dialogs/{dialog}/actions/{button}");
        let body = serde_json::json!({ "params": params });
        self.send(Method::POST, &uri, Some(token), Some(body), LOCAL).await
    }
}
