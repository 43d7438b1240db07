use std::net::{IpAddr, SocketAddr};
use std::sync::Arc;

use axum::extract::{ConnectInfo, Path, Query, State};
use axum::http::header::{AUTHORIZATION, CACHE_CONTROL, CONTENT_TYPE, COOKIE, SET_COOKIE};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::Json;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use webdialog_core::bizdb::{BizDbError, ProcedureStatus};
use webdialog_core::compiler::TemplateError;
use webdialog_core::conf::{
    is_valid_language, HistoryAction, HistoryFilter, NewHistoryEntry, OverrideKey, PropertyOverride,
};
use webdialog_core::dml::{is_valid_dialog_name, ObjectType, TemplateSource};
use webdialog_core::render::{render_dialog, RenderInput};

use crate::error::ApiError;
use crate::session::Session;
use crate::state::AppState;

pub const SESSION_COOKIE: &str = "webdialog_session";

type AppResult<T> = Result<T, ApiError>;
type Shared = State<Arc<AppState>>;

/// Runs the synchronous request pipeline off the async workers.
async fn blocking<T, F>(state: Arc<AppState>, f: F) -> AppResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> AppResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(ApiError::internal)?
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    if let Some(token) = headers
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
    {
        return Some(token.trim().to_string());
    }
    headers
        .get_all(COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .find_map(|kv| kv.trim().strip_prefix(SESSION_COOKIE)?.strip_prefix('='))
        .map(str::to_string)
}

fn session(state: &AppState, headers: &HeaderMap) -> AppResult<Session> {
    bearer(headers)
        .and_then(|t| state.sessions.get(&t))
        .ok_or_else(ApiError::unauthorized)
}

fn record(state: &AppState, user: &str, terminal: IpAddr, action: HistoryAction, target: String, detail: String) -> AppResult<()> {
    state.conf.record_history(NewHistoryEntry {
        user_id: user.to_string(),
        terminal: terminal.to_canonical().to_string(),
        action,
        target,
        detail,
    })?;
    Ok(())
}

// ---- login ----

#[derive(Debug, Deserialize)]
pub struct LoginBody {
    pub user_id: String,
    pub secret: String,
    #[serde(default)]
    pub language: Option<String>,
}

pub async fn login(
    State(state): Shared,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    Json(body): Json<LoginBody>,
) -> AppResult<Response> {
    let session = blocking(state, move |st| {
        let language = body
            .language
            .unwrap_or_else(|| st.conf.default_language().to_string());
        if !is_valid_language(&language) {
            return Err(ApiError::bad_request(format!("invalid language `{language}`")));
        }
        let user = st
            .conf
            .verify_credentials(&body.user_id, &body.secret)?
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "invalid credentials"))?;
        st.check_terminal(&user.user_id, peer.ip())?;
        let session = st.sessions.issue(&user.user_id, peer.ip(), &language);
        record(st, &user.user_id, peer.ip(), HistoryAction::Login, String::new(), String::new())?;
        Ok(session)
    })
    .await?;
    let cookie = format!("{SESSION_COOKIE}={}; Path=/; HttpOnly; SameSite=Strict", session.token);
    let mut response = Json(json!({
        "token": session.token,
        "user_id": session.user_id,
        "language": session.language,
    }))
    .into_response();
    if let Ok(v) = HeaderValue::from_str(&cookie) {
        response.headers_mut().insert(SET_COOKIE, v);
    }
    Ok(response)
}

pub async fn logout(State(state): Shared, headers: HeaderMap) -> AppResult<StatusCode> {
    let token = bearer(&headers).ok_or_else(ApiError::unauthorized)?;
    if state.sessions.revoke(&token) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::unauthorized())
    }
}

// ---- dialogs ----

#[derive(Debug, Deserialize)]
pub struct DialogQuery {
    pub lang: Option<String>,
    pub page: Option<u32>,
}

pub async fn get_dialog(
    State(state): Shared,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    Path(name): Path<String>,
    Query(query): Query<DialogQuery>,
) -> AppResult<Html<String>> {
    blocking(state, move |st| {
        let session = session(st, &headers)?;
        let language = query.lang.unwrap_or_else(|| session.language.clone());
        if !is_valid_language(&language) {
            return Err(ApiError::bad_request(format!("invalid language `{language}`")));
        }
        let page = query.page.unwrap_or(1);
        if page == 0 {
            return Err(ApiError::bad_request("pages are numbered from 1"));
        }
        let compiled = st.compiled(&name)?;
        let view = st.view(&compiled, &session.user_id, &language)?;
        st.check_access(&view, peer.ip())?;
        let data = st.fetch_data(&compiled, &view, page)?;
        let html = render_dialog(&RenderInput {
            compiled: &compiled,
            resolved: &view.resolved,
            rights: &view.rights,
            data: &data,
            language: &language,
            page,
            alert_poll_ms: st.config.alert_poll_ms,
        })
        .map_err(ApiError::internal)?;
        record(
            st,
            &session.user_id,
            peer.ip(),
            HistoryAction::OpenDialog,
            name.clone(),
            format!("lang={language} page={page}"),
        )?;
        Ok(Html(html))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
pub struct ActionBody {
    #[serde(default)]
    pub params: Map<String, Value>,
}

pub async fn invoke_action(
    State(state): Shared,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    Path((name, object_id)): Path<(String, String)>,
    body: Option<Json<ActionBody>>,
) -> AppResult<Response> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    blocking(state, move |st| {
        let session = session(st, &headers)?;
        let compiled = st.compiled(&name)?;
        let object = compiled
            .object(&object_id)
            .filter(|o| o.object_type == ObjectType::Button)
            .ok_or_else(|| ApiError::not_found(format!("no button `{object_id}` in `{name}`")))?;
        let view = st.view(&compiled, &session.user_id, &session.language)?;
        st.check_access(&view, peer.ip())?;
        if !view.rights.get(&object.id).is_none_or(|r| r.actionable) {
            return Err(ApiError::forbidden(format!("`{object_id}` is not actionable")));
        }
        let procedure = compiled
            .button_procedure(&object.id)
            .ok_or_else(|| ApiError::unprocessable(format!("`{object_id}` has no procedure to call")))?;
        let registration = st.bizdb.procedure(procedure).ok_or_else(|| {
            ApiError::new(StatusCode::BAD_GATEWAY, format!("unknown procedure `{procedure}`"))
        })?;

        let mut args = Vec::with_capacity(registration.params.len());
        let mut missing = Vec::new();
        for param in &registration.params {
            match body.params.get(&param.name) {
                Some(Value::String(s)) => args.push(s.clone()),
                Some(Value::Number(n)) => args.push(n.to_string()),
                Some(Value::Bool(b)) => args.push(b.to_string()),
                Some(_) => {
                    return Err(ApiError::unprocessable(format!(
                        "parameter `{}` must be a string, number or boolean",
                        param.name
                    )))
                }
                None => missing.push(param.name.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(ApiError::unprocessable(format!("missing parameters: {}", missing.join(", ")))
                .with_details(json!({ "missing": missing })));
        }

        let result = st.bizdb.call_procedure(procedure, &args).map_err(|e| match e {
            BizDbError::Arity { .. } | BizDbError::ArgumentType { .. } => ApiError::unprocessable(e.to_string()),
            BizDbError::UnknownProcedure(_) => ApiError::new(StatusCode::BAD_GATEWAY, e.to_string()),
            other => ApiError::internal(other),
        })?;
        if result.status == ProcedureStatus::Failed {
            return Ok((
                StatusCode::BAD_GATEWAY,
                Json(json!({ "status": result.status, "message": result.message })),
            )
                .into_response());
        }
        record(
            st,
            &session.user_id,
            peer.ip(),
            HistoryAction::InvokeAction,
            format!("{name}/{object_id}"),
            format!("proc:{procedure}"),
        )?;
        Ok(Json(json!({ "status": result.status, "message": result.message })).into_response())
    })
    .await
}

// ---- overrides ----

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scope {
    Keyword(String),
    Role { role_id: String },
}

#[derive(Debug, Deserialize)]
pub struct OverrideBody {
    pub scope: Scope,
    pub dialog: String,
    pub object_id: String,
    pub property: String,
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub value: Option<String>,
}

impl OverrideBody {
    fn key(&self, user_id: &str) -> AppResult<OverrideKey> {
        let role_id = match &self.scope {
            Scope::Keyword(k) if k == "self" => user_id.to_string(),
            Scope::Keyword(k) => return Err(ApiError::bad_request(format!("unknown scope `{k}`"))),
            Scope::Role { role_id } => role_id.clone(),
        };
        Ok(OverrideKey {
            dialog: self.dialog.clone(),
            object_id: self.object_id.clone(),
            property: self.property.clone(),
            role_id,
            language: self.language.clone(),
        })
    }
}

fn override_target(key: &OverrideKey) -> String {
    format!("{}/{}/{}", key.dialog, key.object_id, key.property)
}

fn override_detail(key: &OverrideKey, verb: &str) -> String {
    format!(
        "{verb} role={} lang={}",
        key.role_id,
        key.language.as_deref().unwrap_or("-")
    )
}

pub async fn put_override(
    State(state): Shared,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    Json(body): Json<OverrideBody>,
) -> AppResult<Json<Value>> {
    blocking(state, move |st| {
        let session = session(st, &headers)?;
        st.check_terminal(&session.user_id, peer.ip())?;
        let key = body.key(&session.user_id)?;
        let value = body
            .value
            .clone()
            .ok_or_else(|| ApiError::bad_request("`value` is required"))?;
        let stored = st.conf.set_override(
            &session.user_id,
            PropertyOverride {
                dialog: key.dialog.clone(),
                object_id: key.object_id.clone(),
                property: key.property.clone(),
                role_id: key.role_id.clone(),
                language: key.language.clone(),
                value,
            },
        )?;
        record(
            st,
            &session.user_id,
            peer.ip(),
            HistoryAction::SetOverride,
            override_target(&key),
            override_detail(&key, "set"),
        )?;
        Ok(Json(json!({ "stored": stored.is_some(), "override": stored })))
    })
    .await
}

pub async fn delete_override(
    State(state): Shared,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    Json(body): Json<OverrideBody>,
) -> AppResult<Json<Value>> {
    blocking(state, move |st| {
        let session = session(st, &headers)?;
        st.check_terminal(&session.user_id, peer.ip())?;
        let key = body.key(&session.user_id)?;
        let deleted = st.conf.delete_override(&session.user_id, &key)?;
        record(
            st,
            &session.user_id,
            peer.ip(),
            HistoryAction::SetOverride,
            override_target(&key),
            override_detail(&key, "delete"),
        )?;
        Ok(Json(json!({ "deleted": deleted })))
    })
    .await
}

// ---- administration ----

#[derive(Debug, Deserialize)]
pub struct SaveDialogBody {
    pub name: String,
    pub source: String,
}

pub async fn save_dialog(
    State(state): Shared,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    Json(body): Json<SaveDialogBody>,
) -> AppResult<Json<Value>> {
    blocking(state, move |st| {
        let session = session(st, &headers)?;
        st.check_terminal(&session.user_id, peer.ip())?;
        st.require_admin(&session.user_id)?;
        if !is_valid_dialog_name(&body.name) {
            return Err(ApiError::bad_request(format!("invalid dialog name `{}`", body.name)));
        }
        let source = TemplateSource::new(&body.name, &body.source);
        let compiled = match st.registry.compile_source(&source) {
            Ok(c) => c,
            Err(TemplateError::Parse(d)) => {
                return Err(ApiError::unprocessable(d.message.clone())
                    .with_details(json!({ "diagnostics": [d] })))
            }
            Err(TemplateError::Compile(e)) => {
                return Err(ApiError::unprocessable(e.to_string()).with_details(json!({
                    "diagnostics": [{ "kind": "semantic", "object_id": e.object_id, "message": e.message }]
                })))
            }
            Err(other) => return Err(ApiError::internal(other)),
        };
        st.loader
            .store(&body.name, &body.source)
            .map_err(ApiError::internal)?;
        let compiled = st.registry.install(compiled);
        let registration = st.conf.register_dialog(&session.user_id, &compiled)?;
        record(
            st,
            &session.user_id,
            peer.ip(),
            HistoryAction::SaveDialog,
            body.name.clone(),
            format!("fingerprint={}", compiled.fingerprint),
        )?;
        Ok(Json(json!({
            "name": compiled.name,
            "fingerprint": compiled.fingerprint,
            "objects": registration.objects,
            "removed_objects": registration.removed_objects,
        })))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct AlertBody {
    pub user_id: String,
    pub message: String,
}

pub async fn push_alert(
    State(state): Shared,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    Json(body): Json<AlertBody>,
) -> AppResult<Json<Value>> {
    blocking(state, move |st| {
        let session = session(st, &headers)?;
        st.check_terminal(&session.user_id, peer.ip())?;
        st.require_admin(&session.user_id)?;
        let alert = st.conf.push_alert(&body.user_id, &body.message)?;
        Ok(Json(json!({ "id": alert.alert_id })))
    })
    .await
}

pub async fn alerts(State(state): Shared, headers: HeaderMap) -> AppResult<Json<Value>> {
    blocking(state, move |st| {
        let session = session(st, &headers)?;
        let alerts: Vec<Value> = st
            .conf
            .drain_alerts(&session.user_id)?
            .into_iter()
            .map(|a| json!({ "id": a.alert_id, "message": a.message, "created": a.created }))
            .collect();
        Ok(Json(json!({ "alerts": alerts })))
    })
    .await
}

pub async fn history(
    State(state): Shared,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    Query(filter): Query<HistoryFilter>,
) -> AppResult<Json<Value>> {
    blocking(state, move |st| {
        let session = session(st, &headers)?;
        st.check_terminal(&session.user_id, peer.ip())?;
        st.require_admin(&session.user_id)?;
        let entries = st.conf.list_history(&filter)?;
        Ok(Json(json!({ "entries": entries })))
    })
    .await
}

pub async fn metrics(State(state): Shared) -> Json<Value> {
    Json(json!(state.metrics()))
}

// ---- static files ----

fn asset(content_type: &'static str, body: String) -> Response {
    (
        [
            (CONTENT_TYPE, HeaderValue::from_static(content_type)),
            (CACHE_CONTROL, HeaderValue::from_static("no-cache")),
        ],
        body,
    )
        .into_response()
}

pub async fn runtime_js(State(state): Shared) -> Response {
    asset("text/javascript; charset=utf-8", state.assets.runtime.clone())
}

pub async fn style_css(State(state): Shared) -> Response {
    asset("text/css; charset=utf-8", state.assets.stylesheet.clone())
}

pub async fn index() -> Html<&'static str> {
    Html(LOGIN_PAGE)
}

const LOGIN_PAGE: &str = r#"<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>Sign in</title>
<link rel="stylesheet" href="/static/style.css">
<script src="/static/runtime.js" defer></script>
</head>
<body>
<main class="wd-dialog">
<h1>Sign in</h1>
<form class="wd-form" data-login>
<div class="wd-field"><label for="user_id">User</label><input id="user_id" name="user_id" required></div>
<div class="wd-field"><label for="secret">Secret</label><input id="secret" name="secret" type="password" required></div>
<div class="wd-field"><label for="next">Dialog</label><input id="next" name="next"></div>
<button type="submit">Sign in</button>
</form>
</main>
<div class="wd-status" data-status-region role="status"></div>
</body>
</html>
"#;
