//! A scriptable mock REST server for conformance tests.
//!
//! Routes, pagination, credentials, injected failures and rate limits are all
//! described by a [`Scenario`]. Every request is recorded in order.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::http::{HeaderMap, HeaderName, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use base64::engine::general_purpose::{STANDARD, URL_SAFE_NO_PAD};
use base64::Engine as _;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tokio::sync::oneshot;

#[derive(Debug, thiserror::Error)]
pub enum UpstreamError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("could not bind loopback port: {0}")]
    Bind(std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaginationStyle {
    #[default]
    None,
    Cursor,
    Offset,
    Page,
    LinkHeader,
}

fn default_page_size() -> usize {
    10
}

fn default_items_key() -> Option<String> {
    Some("data".into())
}

fn s(v: &str) -> String {
    v.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paging {
    pub style: PaginationStyle,
    pub page_size: usize,
    /// Envelope key holding the page items; `None` serves a bare array.
    pub items_key: Option<String>,
    pub next_cursor_key: String,
    pub cursor_param: String,
    pub offset_param: String,
    pub page_param: String,
    pub size_param: String,
}

impl Default for Paging {
    fn default() -> Self {
        Paging {
            style: PaginationStyle::None,
            page_size: default_page_size(),
            items_key: default_items_key(),
            next_cursor_key: s("next_cursor"),
            cursor_param: s("cursor"),
            offset_param: s("offset"),
            page_param: s("page"),
            size_param: s("limit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum AuthCheck {
    Bearer {
        token: String,
        #[serde(default = "authorization")]
        header: String,
        #[serde(default = "bearer_prefix")]
        prefix: String,
    },
    Basic {
        username: String,
        password: String,
    },
    ApiKey {
        name: String,
        value: String,
        #[serde(default)]
        in_query: bool,
    },
    /// Any unexpired token issued by the scenario's token endpoint.
    Oauth2,
    /// Any live session issued by the scenario's login endpoint.
    Session {
        header: String,
        #[serde(default)]
        prefix: String,
    },
}

fn authorization() -> String {
    s("Authorization")
}

fn bearer_prefix() -> String {
    s("Bearer ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedResponse {
    /// 1-based index of the request to this route that gets this response.
    pub on_request_n: u64,
    pub status: u16,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default)]
    pub body: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lookup {
    /// Path placeholder whose value selects the body.
    pub param: String,
    pub values: BTreeMap<String, Value>,
    #[serde(default)]
    pub missing: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Redirect {
    pub to: String,
    #[serde(default = "found")]
    pub status: u16,
}

fn found() -> u16 {
    302
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route {
    pub method: String,
    pub path: String,
    #[serde(default)]
    pub items: Option<Vec<Value>>,
    #[serde(default)]
    pub body: Option<Value>,
    #[serde(default)]
    pub lookup: Option<Lookup>,
    #[serde(default)]
    pub pagination: Paging,
    #[serde(default)]
    pub auth: Option<AuthCheck>,
    #[serde(default)]
    pub no_auth: bool,
    #[serde(default)]
    pub error_script: Vec<ScriptedResponse>,
    #[serde(default)]
    pub status: Option<u16>,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(default)]
    pub redirect: Option<Redirect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OAuthServer {
    #[serde(default = "token_path")]
    pub token_path: String,
    pub client_id: String,
    pub client_secret: String,
    #[serde(default = "hour")]
    pub expires_in: u64,
    /// Artificial latency of the token endpoint, to widen race windows.
    #[serde(default)]
    pub delay_ms: u64,
}

fn token_path() -> String {
    s("/oauth/token")
}

fn hour() -> u64 {
    3600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionServer {
    #[serde(default = "login_path")]
    pub login_path: String,
    /// Body fields the login request must carry, compared as strings.
    pub fields: BTreeMap<String, String>,
    /// Key of the issued token in the login response.
    #[serde(default = "token_key")]
    pub token_key: String,
}

fn login_path() -> String {
    s("/login")
}

fn token_key() -> String {
    s("token")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateHeaders {
    pub limit: u64,
    pub window_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub routes: Vec<Route>,
    /// Check applied to routes that declare none.
    #[serde(default)]
    pub auth: Option<AuthCheck>,
    #[serde(default)]
    pub oauth2: Option<OAuthServer>,
    #[serde(default)]
    pub session: Option<SessionServer>,
    /// Quota shared by every route.
    #[serde(default)]
    pub rate_headers: Option<RateHeaders>,
}

impl Scenario {
    pub fn from_yaml(text: &str) -> Result<Scenario, UpstreamError> {
        let s: Scenario = serde_yaml::from_str(text).map_err(|e| UpstreamError::Scenario(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), UpstreamError> {
        for r in &self.routes {
            Method::from_bytes(r.method.to_ascii_uppercase().as_bytes())
                .map_err(|_| UpstreamError::Scenario(format!("bad method {}", r.method)))?;
            if !r.path.starts_with('/') {
                return Err(UpstreamError::Scenario(format!("route path must start with '/': {}", r.path)));
            }
            if r.pagination.style != PaginationStyle::None && r.items.is_none() {
                return Err(UpstreamError::Scenario(format!("paginated route {} has no items", r.path)));
            }
            if r.pagination.page_size == 0 {
                return Err(UpstreamError::Scenario(format!("route {} has page_size 0", r.path)));
            }
        }
        if let Some(r) = &self.rate_headers {
            if r.limit == 0 || r.window_ms == 0 {
                return Err(UpstreamError::Scenario("rate_headers needs positive limit and window".into()));
            }
        }
        Ok(())
    }
}

/// One request as received.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordedRequest {
    pub seq: u64,
    pub method: String,
    pub path: String,
    pub query: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
    pub body: Option<Value>,
    pub status: u16,
    /// Whether this request exceeded the rate quota.
    pub over_quota: bool,
    /// Arrival time relative to server start.
    pub elapsed_ms: f64,
}

impl RecordedRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    pub fn query_value(&self, name: &str) -> Option<&str> {
        self.query.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

const SENSITIVE_HEADERS: &[&str] = &["authorization", "proxy-authorization", "cookie", "x-api-key", "x-session-token"];
const SENSITIVE_QUERY: &[&str] = &["api_key", "apikey", "key", "token", "access_token", "client_secret"];

struct Window {
    started: Instant,
    used: u64,
}

#[derive(Default)]
struct Live {
    log: Vec<RecordedRequest>,
    per_route: HashMap<usize, u64>,
    oauth_tokens: HashMap<String, Instant>,
    sessions: Vec<String>,
    token_fetches: u64,
    logins: u64,
    window: Option<Window>,
    issued: u64,
}

struct Shared {
    started: Instant,
    scenario: Scenario,
    base_url: String,
    live: Mutex<Live>,
}

/// A running mock server bound to a loopback ephemeral port.
pub struct MockUpstream {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<()>>,
}

impl MockUpstream {
    pub async fn start(scenario: Scenario) -> Result<MockUpstream, UpstreamError> {
        scenario.check()?;
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(UpstreamError::Bind)?;
        let addr = listener.local_addr().map_err(UpstreamError::Bind)?;
        let shared = Arc::new(Shared { started: Instant::now(), scenario, base_url: format!("http://{addr}"), live: Mutex::new(Live::default()) });
        let state = shared.clone();
        let app = Router::new().fallback(move |method: Method, uri: Uri, headers: HeaderMap, body: Bytes| {
            let state = state.clone();
            async move { handle(state, method, uri, headers, body).await }
        });
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(MockUpstream { addr, shared, shutdown: Some(tx), task: Some(task) })
    }

    pub fn base_url(&self) -> String {
        self.shared.base_url.clone()
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Every request in arrival order, with raw headers.
    pub fn requests_received(&self) -> Vec<RecordedRequest> {
        self.shared.live.lock().log.clone()
    }

    /// The request log with credentials masked, suitable for persisting.
    pub fn redacted_log(&self) -> Vec<RecordedRequest> {
        self.requests_received().into_iter().map(redact).collect()
    }

    pub fn requests_to(&self, path: &str) -> usize {
        self.shared.live.lock().log.iter().filter(|r| r.path == path).count()
    }

    pub fn token_fetches(&self) -> u64 {
        self.shared.live.lock().token_fetches
    }

    pub fn logins(&self) -> u64 {
        self.shared.live.lock().logins
    }

    pub fn over_quota(&self) -> usize {
        self.shared.live.lock().log.iter().filter(|r| r.over_quota).count()
    }

    /// Invalidate every issued session, as a server restart would.
    pub fn expire_sessions(&self) {
        self.shared.live.lock().sessions.clear();
    }

    /// Invalidate every issued OAuth token.
    pub fn revoke_tokens(&self) {
        self.shared.live.lock().oauth_tokens.clear();
    }

    pub fn clear_log(&self) {
        let mut live = self.shared.live.lock();
        live.log.clear();
        live.per_route.clear();
    }

    pub async fn stop(mut self) {
        self.shutdown_now().await;
    }

    async fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for MockUpstream {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

fn redact(mut r: RecordedRequest) -> RecordedRequest {
    for (k, v) in &mut r.headers {
        if SENSITIVE_HEADERS.contains(&k.to_ascii_lowercase().as_str()) {
            *v = s("[redacted]");
        }
    }
    for (k, v) in &mut r.query {
        if SENSITIVE_QUERY.contains(&k.to_ascii_lowercase().as_str()) {
            *v = s("[redacted]");
        }
    }
    if let Some(Value::Object(m)) = &mut r.body {
        for (k, v) in m.iter_mut() {
            let k = k.to_ascii_lowercase();
            if k.contains("pass") || k.contains("secret") || k.contains("token") {
                *v = json!("[redacted]");
            }
        }
    }
    r
}

fn parse_pairs(text: &str) -> Vec<(String, String)> {
    url::form_urlencoded::parse(text.as_bytes()).into_owned().collect()
}

/// Match `/item/{id}.json` against `/item/12.json`, capturing placeholders.
fn match_path(template: &str, path: &str) -> Option<HashMap<String, String>> {
    let t: Vec<&str> = template.trim_end_matches('/').split('/').collect();
    let p: Vec<&str> = path.trim_end_matches('/').split('/').collect();
    if t.len() != p.len() {
        return None;
    }
    let mut caps = HashMap::new();
    for (ts, ps) in t.iter().zip(p.iter()) {
        match (ts.find('{'), ts.find('}')) {
            (Some(open), Some(close)) if open < close => {
                let (prefix, suffix) = (&ts[..open], &ts[close + 1..]);
                if ps.len() < prefix.len() + suffix.len() || !ps.starts_with(prefix) || !ps.ends_with(suffix) {
                    return None;
                }
                let value = &ps[prefix.len()..ps.len() - suffix.len()];
                if value.is_empty() {
                    return None;
                }
                let decoded = percent_decode(value);
                caps.insert(ts[open + 1..close].to_string(), decoded);
            }
            _ if ts == ps => {}
            _ => return None,
        }
    }
    Some(caps)
}

fn percent_decode(v: &str) -> String {
    url::form_urlencoded::parse(format!("x={}", v.replace('+', "%2B")).as_bytes())
        .next()
        .map(|(_, v)| v.into_owned())
        .unwrap_or_default()
}

fn json_response(status: u16, body: &Value, headers: &[(String, String)]) -> Response {
    let mut resp = (StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR), body.to_string()).into_response();
    let h = resp.headers_mut();
    h.insert("content-type", HeaderValue::from_static("application/json"));
    for (k, v) in headers {
        if let (Ok(name), Ok(value)) = (HeaderName::from_bytes(k.as_bytes()), HeaderValue::from_str(v)) {
            h.append(name, value);
        }
    }
    resp
}

fn unauthorized(message: &str) -> (u16, Value) {
    (401, json!({ "message": message, "error": "unauthorized" }))
}

fn header<'a>(headers: &'a HeaderMap, name: &str) -> Option<&'a str> {
    headers.get(name).and_then(|v| v.to_str().ok())
}

fn check_auth(check: &AuthCheck, headers: &HeaderMap, query: &[(String, String)], live: &Live) -> Result<(), (u16, Value)> {
    let ok = match check {
        AuthCheck::Bearer { token, header: name, prefix } => header(headers, name) == Some(format!("{prefix}{token}").as_str()),
        AuthCheck::Basic { username, password } => {
            let expected = STANDARD.encode(format!("{username}:{password}"));
            header(headers, "authorization").and_then(|v| v.strip_prefix("Basic ")) == Some(expected.as_str())
        }
        AuthCheck::ApiKey { name, value, in_query } => {
            if *in_query {
                query.iter().any(|(k, v)| k == name && v == value)
            } else {
                header(headers, name) == Some(value.as_str())
            }
        }
        AuthCheck::Oauth2 => header(headers, "authorization")
            .and_then(|v| v.strip_prefix("Bearer "))
            .and_then(|t| live.oauth_tokens.get(t))
            .is_some_and(|exp| Instant::now() < *exp),
        AuthCheck::Session { header: name, prefix } => header(headers, name)
            .and_then(|v| v.strip_prefix(prefix.as_str()))
            .is_some_and(|t| live.sessions.iter().any(|s| s == t)),
    };
    if ok {
        Ok(())
    } else {
        Err(unauthorized("invalid or missing credentials"))
    }
}

fn cursor_token(index: usize) -> String {
    URL_SAFE_NO_PAD.encode(format!("idx:{index}"))
}

fn cursor_index(token: &str) -> Option<usize> {
    let raw = URL_SAFE_NO_PAD.decode(token).ok()?;
    String::from_utf8(raw).ok()?.strip_prefix("idx:")?.parse().ok()
}

fn envelope(paging: &Paging, page: Vec<Value>, extra: Option<(String, Value)>) -> Value {
    match &paging.items_key {
        Some(key) => {
            let mut m = Map::new();
            m.insert(key.clone(), Value::Array(page));
            if let Some((k, v)) = extra {
                m.insert(k, v);
            }
            Value::Object(m)
        }
        None => Value::Array(page),
    }
}

fn param_usize(query: &[(String, String)], name: &str) -> Result<Option<usize>, (u16, Value)> {
    match query.iter().find(|(k, _)| k == name) {
        None => Ok(None),
        Some((_, v)) => v
            .parse()
            .map(Some)
            .map_err(|_| (400, json!({ "message": format!("query parameter {name} must be a non-negative integer") }))),
    }
}

/// Serve one page of `items` in the route's pagination style.
fn paginate(
    route: &Route,
    items: &[Value],
    query: &[(String, String)],
    base_url: &str,
    path: &str,
) -> Result<(Value, Vec<(String, String)>), (u16, Value)> {
    let p = &route.pagination;
    let size = param_usize(query, &p.size_param)?.unwrap_or(p.page_size).max(1);
    let slice = |start: usize| items.iter().skip(start).take(size).cloned().collect::<Vec<_>>();
    match p.style {
        PaginationStyle::None => Ok((envelope(p, items.to_vec(), None), vec![])),
        PaginationStyle::Cursor => {
            let start = match query.iter().find(|(k, _)| *k == p.cursor_param) {
                None => 0,
                Some((_, t)) => cursor_index(t).ok_or((400, json!({ "message": "invalid cursor" })))?,
            };
            let next = (start + size < items.len()).then(|| (p.next_cursor_key.clone(), json!(cursor_token(start + size))));
            let mut body = envelope(p, slice(start), None);
            if let (Some((k, v)), Value::Object(m)) = (next, &mut body) {
                m.insert(k, v);
            }
            Ok((body, vec![]))
        }
        PaginationStyle::Offset => {
            let start = param_usize(query, &p.offset_param)?.unwrap_or(0);
            let total = ("total".to_string(), json!(items.len()));
            Ok((envelope(p, slice(start), Some(total)), vec![]))
        }
        PaginationStyle::Page => {
            let page = param_usize(query, &p.page_param)?.unwrap_or(1);
            if page == 0 {
                return Err((400, json!({ "message": "page numbers start at 1" })));
            }
            let total = ("total".to_string(), json!(items.len()));
            Ok((envelope(p, slice((page - 1) * size), Some(total)), vec![]))
        }
        PaginationStyle::LinkHeader => {
            let page = param_usize(query, &p.page_param)?.unwrap_or(1).max(1);
            let pages = items.len().div_ceil(size).max(1);
            let link = |n: usize| format!("<{base_url}{path}?{}={n}&{}={size}>", p.page_param, p.size_param);
            let mut rels = Vec::new();
            if page < pages {
                rels.push(format!("{}; rel=\"next\"", link(page + 1)));
            }
            if page > 1 {
                rels.push(format!("{}; rel=\"prev\"", link(page - 1)));
            }
            rels.push(format!("{}; rel=\"first\"", link(1)));
            rels.push(format!("{}; rel=\"last\"", link(pages)));
            let headers = vec![(s("Link"), rels.join(", "))];
            Ok((envelope(p, slice((page - 1) * size), None), headers))
        }
    }
}

async fn handle(state: Arc<Shared>, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    let path = uri.path().to_string();
    let query = uri.query().map(parse_pairs).unwrap_or_default();
    let body_json: Option<Value> = if body.is_empty() {
        None
    } else {
        Some(serde_json::from_slice(&body).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&body).into_owned())))
    };
    let scenario = &state.scenario;
    let elapsed_ms = state.started.elapsed().as_secs_f64() * 1000.0;

    let (delay, outcome) = {
        let mut live = state.live.lock();
        let (delay, over_quota, (status, body, extra)) = respond(&state, &mut live, &method, &path, &query, &headers, &body, scenario);
        let seq = live.log.len() as u64 + 1;
        let recorded = RecordedRequest {
            seq,
            method: method.to_string(),
            path: path.clone(),
            query: query.clone(),
            headers: headers
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_str().unwrap_or_default().to_string()))
                .collect(),
            body: body_json.clone(),
            status,
            over_quota,
            elapsed_ms,
        };
        live.log.push(recorded);
        (delay, (status, body, extra))
    };
    if delay > 0 {
        tokio::time::sleep(Duration::from_millis(delay)).await;
    }
    let (status, body, extra) = outcome;
    json_response(status, &body, &extra)
}

type Outcome = (u16, Value, Vec<(String, String)>);

#[allow(clippy::too_many_arguments)]
fn respond(
    state: &Shared,
    live: &mut Live,
    method: &Method,
    path: &str,
    query: &[(String, String)],
    headers: &HeaderMap,
    raw_body: &Bytes,
    scenario: &Scenario,
) -> (u64, bool, Outcome) {
    if let Some(o) = &scenario.oauth2 {
        if path == o.token_path && method == Method::POST {
            live.token_fetches += 1;
            let form = parse_pairs(&String::from_utf8_lossy(raw_body));
            let get = |k: &str| form.iter().find(|(n, _)| n == k).map(|(_, v)| v.as_str());
            if get("grant_type") != Some("client_credentials") {
                return (o.delay_ms, false, (400, json!({ "error": "unsupported_grant_type" }), vec![]));
            }
            if get("client_id") != Some(o.client_id.as_str()) || get("client_secret") != Some(o.client_secret.as_str()) {
                return (o.delay_ms, false, (401, json!({ "error": "invalid_client", "error_description": "client authentication failed" }), vec![]));
            }
            live.issued += 1;
            let token = format!("at-{}-{}", live.issued, cursor_token(live.issued as usize));
            live.oauth_tokens.insert(token.clone(), Instant::now() + Duration::from_secs(o.expires_in));
            let body = json!({ "access_token": token, "token_type": "Bearer", "expires_in": o.expires_in });
            return (o.delay_ms, false, (200, body, vec![]));
        }
    }
    if let Some(sess) = &scenario.session {
        if path == sess.login_path && method == Method::POST {
            live.logins += 1;
            let body: Value = serde_json::from_slice(raw_body).unwrap_or(Value::Null);
            let matches = sess.fields.iter().all(|(k, want)| match body.get(k) {
                Some(Value::String(v)) => v == want,
                Some(other) => other.to_string() == *want,
                None => false,
            });
            if !matches {
                let (s, b) = unauthorized("login rejected");
                return (0, false, (s, b, vec![]));
            }
            live.issued += 1;
            let token = format!("sess-{}", live.issued);
            live.sessions.push(token.clone());
            return (0, false, (200, json!({ sess.token_key.clone(): token, "user": "mock" }), vec![]));
        }
    }

    let found = scenario.routes.iter().enumerate().find_map(|(i, r)| {
        if !r.method.eq_ignore_ascii_case(method.as_str()) {
            return None;
        }
        match_path(&r.path, path).map(|caps| (i, r, caps))
    });
    let Some((index, route, caps)) = found else {
        return (0, false, (404, json!({ "message": format!("no route for {method} {path}") }), vec![]));
    };

    let mut rate_headers = Vec::new();
    let over_quota = false;
    if let Some(rate) = &scenario.rate_headers {
        let window = Duration::from_millis(rate.window_ms);
        let now = Instant::now();
        let w = live.window.get_or_insert(Window { started: now, used: 0 });
        if now.duration_since(w.started) >= window {
            *w = Window { started: now, used: 0 };
        }
        w.used += 1;
        let reset = window.saturating_sub(now.duration_since(w.started));
        let reset_secs = reset.as_secs_f64().ceil().max(1.0) as u64;
        rate_headers.push((s("X-RateLimit-Limit"), rate.limit.to_string()));
        rate_headers.push((s("X-RateLimit-Remaining"), rate.limit.saturating_sub(w.used).to_string()));
        rate_headers.push((s("X-RateLimit-Reset"), reset_secs.to_string()));
        if w.used > rate.limit {
            rate_headers.push((s("Retry-After"), reset_secs.to_string()));
            let body = json!({ "message": "rate limit exceeded" });
            return (0, true, (429, body, rate_headers));
        }
    }

    let n = {
        let c = live.per_route.entry(index).or_insert(0);
        *c += 1;
        *c
    };

    if !route.no_auth {
        if let Some(check) = route.auth.as_ref().or(scenario.auth.as_ref()) {
            if let Err((status, body)) = check_auth(check, headers, query, live) {
                return (route.delay_ms, over_quota, (status, body, rate_headers));
            }
        }
    }

    if let Some(scripted) = route.error_script.iter().find(|e| e.on_request_n == n) {
        let mut h: Vec<(String, String)> = scripted.headers.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        h.extend(rate_headers);
        return (route.delay_ms, over_quota, (scripted.status, scripted.body.clone(), h));
    }

    if let Some(r) = &route.redirect {
        let mut h = rate_headers;
        h.push((s("Location"), r.to.clone()));
        return (route.delay_ms, over_quota, (r.status, Value::Null, h));
    }

    let mut extra: Vec<(String, String)> = route.headers.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    extra.extend(rate_headers);
    let status = route.status.unwrap_or(200);
    let body = if let Some(lookup) = &route.lookup {
        caps.get(&lookup.param).and_then(|v| lookup.values.get(v)).cloned().unwrap_or_else(|| lookup.missing.clone())
    } else if let Some(items) = &route.items {
        match paginate(route, items, query, &state.base_url, path) {
            Ok((body, headers)) => {
                extra.extend(headers);
                body
            }
            Err((status, body)) => return (route.delay_ms, over_quota, (status, body, extra)),
        }
    } else {
        route.body.clone().unwrap_or(Value::Null)
    };
    (route.delay_ms, over_quota, (status, body, extra))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_matching() {
        let caps = match_path("/item/{id}.json", "/item/12.json").unwrap();
        assert_eq!(caps["id"], "12");
        assert!(match_path("/item/{id}.json", "/item/.json").is_none());
        assert!(match_path("/repos/{o}/{r}", "/repos/a").is_none());
        assert_eq!(match_path("/repos/{o}/{r}", "/repos/a/b%20c").unwrap()["r"], "b c");
        assert!(match_path("/items", "/items/").is_some());
    }

    #[test]
    fn cursor_tokens_round_trip() {
        for i in [0, 2, 17, 1000] {
            assert_eq!(cursor_index(&cursor_token(i)), Some(i));
        }
        assert_eq!(cursor_index("nope!"), None);
    }

    #[test]
    fn redaction() {
        let r = RecordedRequest {
            seq: 1,
            method: s("GET"),
            path: s("/x"),
            query: vec![(s("api_key"), s("k1")), (s("q"), s("v"))],
            headers: vec![(s("Authorization"), s("Bearer t")), (s("accept"), s("*/*"))],
            body: Some(json!({"password": "p", "user": "u"})),
            status: 200,
            over_quota: false,
            elapsed_ms: 0.0,
        };
        let red = redact(r);
        assert_eq!(red.query_value("api_key"), Some("[redacted]"));
        assert_eq!(red.query_value("q"), Some("v"));
        assert_eq!(red.header("authorization"), Some("[redacted]"));
        assert_eq!(red.body.unwrap()["password"], "[redacted]");
    }

    #[test]
    fn scenario_checks() {
        assert!(Scenario::from_yaml("routes: [{method: GET, path: items}]").is_err());
        assert!(Scenario::from_yaml("routes: [{method: GET, path: /i, pagination: {style: cursor}}]").is_err());
        assert!(Scenario::from_yaml("routes: [{method: GET, path: /i, body: {a: 1}}]").is_ok());
    }
}
