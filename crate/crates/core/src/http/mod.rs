//! Execution of resolved tools against their upstream.

pub mod auth;
pub mod pagination;
pub mod ratelimit;
pub mod request;
pub mod retry;

use std::sync::Arc;
use std::time::{Duration, SystemTime};

use regex::Regex;
use serde::Serialize;
use serde_json::{Map, Value};
use url::Url;

use crate::credentials::CredentialResolver;
use crate::model::{AuthConfig, HttpMethod, PaginationBehavior, ResolvedTool, SessionAuth};
use crate::transform::{self, JsonPath, TransformError};
use auth::{primary_credential, AppliedAuth, AuthError, AuthManager};
use pagination::{next_request, page_items, PaginationError, PaginationState};
use ratelimit::{RateKey, RateObservation, RateRegistry};
use request::{build_request, normalize_params, HttpRequestPlan, RequestError};
use retry::{backoff_delay, classify_response, parse_retry_after, Classification};

/// Reserved parameter carrying an expose-mode continuation cursor.
pub const CURSOR_PARAM: &str = "_cursor";
/// Reserved parameter carrying a caller-supplied jq filter.
pub const JQ_PARAM: &str = "_jq";
pub const MAX_REDIRECTS: usize = 3;
const MESSAGE_LIMIT: usize = 300;
const REDACTED: &str = "[redacted]";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    InvalidParams(#[from] RequestError),
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error(transparent)]
    Pagination(#[from] PaginationError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("upstream returned {status}: {message}")]
    UpstreamTerminal { status: u16, message: String, code: Option<String> },
    #[error("gave up after {attempts} attempts: {message}")]
    RetriesExhausted { attempts: u32, status: Option<u16>, message: String },
    #[error("request timed out after {}", crate::model::duration::render(*.0))]
    Timeout(Duration),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("redirect refused: {0}")]
    Redirect(String),
    #[error("upstream response is not valid JSON: {0}")]
    InvalidResponse(String),
}

impl EngineError {
    pub fn kind(&self) -> &'static str {
        match self {
            EngineError::InvalidParams(_) => "invalid_params",
            EngineError::Auth(AuthError::Credential(_)) => "credential_error",
            EngineError::Auth(_) => "auth_error",
            EngineError::Pagination(_) => "pagination_error",
            EngineError::Transform(TransformError::OverrideForbidden) => "override_forbidden",
            EngineError::Transform(_) => "transform_error",
            EngineError::UpstreamTerminal { .. } => "upstream_terminal",
            EngineError::RetriesExhausted { .. } => "retries_exhausted",
            EngineError::Timeout(_) => "timeout",
            EngineError::Transport(_) => "transport_error",
            EngineError::Redirect(_) => "redirect_refused",
            EngineError::InvalidResponse(_) => "invalid_response",
        }
    }

    /// Last upstream status associated with the failure.
    pub fn status(&self) -> Option<u16> {
        match self {
            EngineError::UpstreamTerminal { status, .. } => Some(*status),
            EngineError::RetriesExhausted { status, .. } => *status,
            EngineError::Auth(AuthError::TokenEndpoint { status, .. } | AuthError::LoginFailed { status, .. }) => *status,
            _ => None,
        }
    }

    fn scrub(self, secrets: &[String]) -> Self {
        let s = |m: String| scrub(&m, secrets);
        match self {
            EngineError::UpstreamTerminal { status, message, code } => {
                EngineError::UpstreamTerminal { status, message: s(message), code: code.map(s) }
            }
            EngineError::RetriesExhausted { attempts, status, message } => {
                EngineError::RetriesExhausted { attempts, status, message: s(message) }
            }
            EngineError::Transport(m) => EngineError::Transport(s(m)),
            EngineError::Redirect(m) => EngineError::Redirect(s(m)),
            EngineError::InvalidResponse(m) => EngineError::InvalidResponse(s(m)),
            EngineError::Auth(AuthError::TokenEndpoint { status, message }) => {
                EngineError::Auth(AuthError::TokenEndpoint { status, message: s(message) })
            }
            EngineError::Auth(AuthError::LoginFailed { status, message }) => {
                EngineError::Auth(AuthError::LoginFailed { status, message: s(message) })
            }
            other => other,
        }
    }
}

/// Replace every occurrence of a secret in `text`.
pub fn scrub(text: &str, secrets: &[String]) -> String {
    let mut out = text.to_string();
    for secret in secrets.iter().filter(|s| s.len() >= 3) {
        if out.contains(secret.as_str()) {
            out = out.replace(secret.as_str(), REDACTED);
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ToolResult {
    pub value: Value,
    pub pages_fetched: u32,
    pub truncated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_cursor: Option<String>,
    pub upstream_status: u16,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Counters gathered during one invocation, successful or not.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExecStats {
    pub upstream_status: Option<u16>,
    pub attempts: u32,
    pub pages: u32,
    pub request_bytes: u64,
    pub response_bytes: u64,
}

/// Who the call is made for, used to key non-shared rate-limit state.
#[derive(Debug, Clone, Default)]
pub struct CallOrigin {
    pub principal: String,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub user_agent: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { user_agent: concat!("dadl/", env!("CARGO_PKG_VERSION")).into() }
    }
}

/// Shared HTTP machinery: client, credential resolver, auth caches and rate gates.
#[derive(Debug)]
pub struct HttpEngine {
    client: reqwest::Client,
    resolver: Arc<CredentialResolver>,
    auth: AuthManager,
    rates: RateRegistry,
}

struct Response {
    status: u16,
    headers: reqwest::header::HeaderMap,
    body: Value,
    url: Url,
}

impl HttpEngine {
    pub fn new(resolver: Arc<CredentialResolver>) -> Self {
        Self::with_config(resolver, EngineConfig::default())
    }

    pub fn with_config(resolver: Arc<CredentialResolver>, config: EngineConfig) -> Self {
        let client = reqwest::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .user_agent(config.user_agent)
            .build()
            .expect("HTTP client construction");
        HttpEngine { client, resolver, auth: AuthManager::new(), rates: RateRegistry::default() }
    }

    pub fn resolver(&self) -> &CredentialResolver {
        &self.resolver
    }

    pub fn auth_manager(&self) -> &AuthManager {
        &self.auth
    }

    /// Run one tool call. The caller must already have authorized it.
    pub(crate) async fn execute_tool(
        &self,
        tool: &ResolvedTool,
        params: &Map<String, Value>,
        origin: &CallOrigin,
        stats: &mut ExecStats,
    ) -> Result<ToolResult, EngineError> {
        let mut secrets = Vec::new();
        let result = self.execute_inner(tool, params, origin, stats, &mut secrets).await;
        result.map_err(|e| e.scrub(&secrets))
    }

    async fn execute_inner(
        &self,
        tool: &ResolvedTool,
        params: &Map<String, Value>,
        origin: &CallOrigin,
        stats: &mut ExecStats,
        secrets: &mut Vec<String>,
    ) -> Result<ToolResult, EngineError> {
        let mut params = params.clone();
        let cursor = match params.remove(CURSOR_PARAM) {
            Some(_) if !tool.expose_paginated() => return Err(RequestError::UnknownParam(CURSOR_PARAM.into()).into()),
            Some(Value::String(c)) => Some(c),
            Some(Value::Null) | None => None,
            Some(_) => {
                return Err(RequestError::TypeMismatch { name: CURSOR_PARAM.into(), expected: "string".into() }.into())
            }
        };
        let jq_override = match params.remove(JQ_PARAM) {
            Some(_) if !tool.transform.allow_jq_override => return Err(TransformError::OverrideForbidden.into()),
            Some(Value::String(f)) => Some(f),
            Some(Value::Null) | None => None,
            Some(_) => return Err(RequestError::TypeMismatch { name: JQ_PARAM.into(), expected: "string".into() }.into()),
        };
        let params = normalize_params(tool, &params)?;

        let Some(cfg) = &tool.pagination else {
            let plan = build_request(tool, &params, &Default::default())?;
            let resp = self.send_with_retry(tool, plan, origin, stats, secrets).await?;
            stats.pages = 1;
            let out = transform::run_pipeline(&resp.body, &tool.transform, jq_override.as_deref())?;
            return Ok(ToolResult {
                value: out.value,
                pages_fetched: 1,
                truncated: out.truncated,
                next_cursor: None,
                upstream_status: resp.status,
                attempts: stats.attempts,
                warnings: out.warnings,
            });
        };

        let mut state = match &cursor {
            Some(c) => PaginationState::resume(cfg, c)?,
            None => PaginationState::start(cfg),
        };
        let expose = cfg.behavior == PaginationBehavior::Expose;
        let max_pages = if expose { 1 } else { cfg.max_pages.get() };
        let mut items = Vec::new();
        let mut warnings = Vec::new();
        let mut truncated = false;
        let mut next_cursor = None;
        let mut last_status;
        loop {
            let page = state.page_request(cfg);
            if let Some(u) = &page.url_override {
                check_link_target(tool, u)?;
            }
            let plan = build_request(tool, &params, &page)?;
            let resp = self.send_with_retry(tool, plan, origin, stats, secrets).await?;
            last_status = resp.status;
            state.pages_fetched += 1;
            stats.pages = state.pages_fetched;
            let page_items = page_items(cfg, &resp.body)?;
            let count = page_items.len();
            items.extend(page_items);
            let link = resp.headers.get(reqwest::header::LINK).and_then(|v| v.to_str().ok());
            let step = next_request(cfg, &state, &resp.body, link, count, &resp.url)?;
            warnings.extend(step.warning);
            match step.next {
                None => break,
                Some(next) if state.pages_fetched >= max_pages => {
                    if expose {
                        next_cursor = Some(next.expose_cursor());
                    } else {
                        truncated = true;
                    }
                    break;
                }
                Some(next) => state = next,
            }
        }

        let mut spec = tool.transform.clone();
        spec.result_path = None;
        let out = transform::run_pipeline(&Value::Array(items), &spec, jq_override.as_deref())?;
        warnings.extend(out.warnings);
        Ok(ToolResult {
            value: out.value,
            pages_fetched: state.pages_fetched,
            truncated: truncated || out.truncated,
            next_cursor,
            upstream_status: last_status,
            attempts: stats.attempts,
            warnings,
        })
    }

    async fn authenticate(&self, tool: &ResolvedTool, secrets: &mut Vec<String>) -> Result<AppliedAuth, EngineError> {
        let Some(auth) = &tool.auth else { return Ok(AppliedAuth::default()) };
        let applied = self.auth.apply(&self.client, &tool.backend_name, &tool.base_url, auth, &self.resolver).await?;
        secrets.extend(applied.secrets.iter().cloned());
        Ok(applied)
    }

    fn rate_key(tool: &ResolvedTool, origin: &CallOrigin, shared: bool) -> RateKey {
        RateKey {
            backend: tool.backend_name.clone(),
            credential: tool.auth.as_ref().map(|a| primary_credential(a).to_string()).unwrap_or_default(),
            principal: (!shared).then(|| origin.principal.clone()),
        }
    }

    /// Send one logical request, applying auth, rate gating, retries and re-authentication.
    async fn send_with_retry(
        &self,
        tool: &ResolvedTool,
        plan: HttpRequestPlan,
        origin: &CallOrigin,
        stats: &mut ExecStats,
        secrets: &mut Vec<String>,
    ) -> Result<Response, EngineError> {
        let policy = &tool.error_policy;
        let max_attempts = policy.retry.max_attempts.max(1);
        let gate = tool
            .rate_limit
            .as_ref()
            .map(|p| self.rates.gate(Self::rate_key(tool, origin, p.shared_per_credential), p));
        let mut attempt = 0u32;
        let mut reauthenticated = false;
        loop {
            attempt += 1;
            let applied = self.authenticate(tool, secrets).await?;
            let permit = match &gate {
                Some(g) => Some(g.acquire().await),
                None => None,
            };
            stats.attempts += 1;
            let sent = self.send_following_redirects(&plan, &applied, stats).await;
            let resp = match sent {
                Ok(r) => r,
                Err(e @ (EngineError::Transport(_) | EngineError::Timeout(_))) => {
                    drop(permit);
                    if attempt >= max_attempts {
                        return Err(match e {
                            EngineError::Timeout(_) => e,
                            other => EngineError::RetriesExhausted { attempts: attempt, status: None, message: other.to_string() },
                        });
                    }
                    tokio::time::sleep(backoff_delay(&policy.retry, attempt, None)).await;
                    continue;
                }
                Err(e) => return Err(e),
            };
            stats.upstream_status = Some(resp.status);
            let retry_after = header_str(&resp.headers, tool.rate_limit.as_ref().map_or("Retry-After", |p| &p.retry_after_header))
                .and_then(|v| parse_retry_after(v, SystemTime::now()));
            if let (Some(g), Some(_)) = (&gate, &permit) {
                let p = g.policy();
                g.observe(RateObservation {
                    status: resp.status,
                    remaining: header_str(&resp.headers, &p.remaining_header).and_then(|v| v.trim().parse().ok()),
                    retry_after,
                    reset: p
                        .reset_header
                        .as_deref()
                        .and_then(|h| header_str(&resp.headers, h))
                        .and_then(|v| parse_retry_after(v, SystemTime::now())),
                });
            }
            drop(permit);

            if let Some(auth) = &tool.auth {
                if !reauthenticated && needs_reauth(auth, resp.status) {
                    reauthenticated = true;
                    attempt -= 1;
                    self.auth.invalidate(&tool.backend_name, auth, applied.token_id).await;
                    continue;
                }
            }

            match classify_response(policy, resp.status) {
                Classification::Success => return Ok(resp),
                Classification::Terminal => {
                    let (message, code) = error_message(policy, &resp.body);
                    return Err(EngineError::UpstreamTerminal { status: resp.status, message, code });
                }
                Classification::Retryable => {
                    let (message, _) = error_message(policy, &resp.body);
                    let exhausted = |message| EngineError::RetriesExhausted { attempts: attempt, status: Some(resp.status), message };
                    if attempt >= max_attempts {
                        return Err(exhausted(message));
                    }
                    if let Some(d) = retry_after {
                        if d > policy.retry.max_delay {
                            return Err(exhausted(format!(
                                "{message} (Retry-After of {} exceeds max_delay)",
                                crate::model::duration::render(d)
                            )));
                        }
                    }
                    let delay = backoff_delay(&policy.retry, attempt, retry_after);
                    tracing::debug!(tool = %tool.tool_name, status = resp.status, attempt, delay_ms = delay.as_millis() as u64, "retrying");
                    tokio::time::sleep(delay).await;
                }
            }
        }
    }

    async fn send_following_redirects(
        &self,
        plan: &HttpRequestPlan,
        applied: &AppliedAuth,
        stats: &mut ExecStats,
    ) -> Result<Response, EngineError> {
        let mut url = plan.url.clone();
        if !applied.query.is_empty() {
            let mut pairs = url.query_pairs_mut();
            for (k, v) in &applied.query {
                pairs.append_pair(k, v);
            }
        }
        let origin = url.origin();
        let mut method = plan.method;
        let mut body = plan.body.clone();
        for hop in 0..=MAX_REDIRECTS {
            let req_method = reqwest::Method::from_bytes(method.as_str().as_bytes()).expect("static method");
            let mut req = self.client.request(req_method, url.clone()).timeout(plan.timeout);
            for (k, v) in plan.headers.iter().chain(applied.headers.iter()) {
                req = req.header(k.as_str(), v.as_str());
            }
            req = req.header(reqwest::header::ACCEPT, "application/json");
            if let Some(b) = &body {
                let bytes = serde_json::to_vec(b).unwrap_or_default();
                stats.request_bytes += bytes.len() as u64;
                req = req.header(reqwest::header::CONTENT_TYPE, "application/json").body(bytes);
            }
            let resp = req.send().await.map_err(|e| {
                if e.is_timeout() {
                    EngineError::Timeout(plan.timeout)
                } else {
                    EngineError::Transport(e.without_url().to_string())
                }
            })?;
            let status = resp.status().as_u16();
            if (300..400).contains(&status) && status != 304 {
                let location = header_str(resp.headers(), "location")
                    .ok_or_else(|| EngineError::Redirect(format!("status {status} without Location")))?;
                let target = url.join(location).map_err(|_| EngineError::Redirect("unparseable Location".into()))?;
                if target.origin() != origin {
                    return Err(EngineError::Redirect("cross-origin redirect".into()));
                }
                if hop == MAX_REDIRECTS {
                    return Err(EngineError::Redirect(format!("more than {MAX_REDIRECTS} redirects")));
                }
                if status == 303 || (matches!(status, 301 | 302) && method != HttpMethod::Get && method != HttpMethod::Head) {
                    method = HttpMethod::Get;
                    body = None;
                }
                url = target;
                continue;
            }
            let headers = resp.headers().clone();
            let bytes = resp.bytes().await.map_err(|e| {
                if e.is_timeout() {
                    EngineError::Timeout(plan.timeout)
                } else {
                    EngineError::Transport(e.without_url().to_string())
                }
            })?;
            stats.response_bytes += bytes.len() as u64;
            let body = parse_body(&bytes, status)?;
            return Ok(Response { status, headers, body, url });
        }
        unreachable!("redirect loop returns within MAX_REDIRECTS + 1 hops")
    }
}

fn needs_reauth(auth: &AuthConfig, status: u16) -> bool {
    match auth {
        AuthConfig::OAuth2ClientCredentials(_) => status == 401,
        AuthConfig::Session(SessionAuth { relogin_on, .. }) => relogin_on.contains(&status),
        _ => false,
    }
}

fn header_str<'a>(headers: &'a reqwest::header::HeaderMap, name: &str) -> Option<&'a str> {
    headers.get(name).and_then(|v| v.to_str().ok())
}

fn parse_body(bytes: &[u8], status: u16) -> Result<Value, EngineError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Value::Null);
    }
    match serde_json::from_slice(bytes) {
        Ok(v) => Ok(v),
        Err(_) if !(200..300).contains(&status) => {
            let text: String = String::from_utf8_lossy(bytes).chars().take(MESSAGE_LIMIT).collect();
            Ok(Value::String(text))
        }
        Err(e) => Err(EngineError::InvalidResponse(e.to_string())),
    }
}

fn error_message(policy: &crate::model::ErrorPolicy, body: &Value) -> (String, Option<String>) {
    let pick = |path: &str| {
        JsonPath::parse(path).ok().and_then(|p| p.first(body).cloned()).and_then(|v| match v {
            Value::String(s) => Some(s),
            Value::Null => None,
            other => Some(other.to_string()),
        })
    };
    let message = pick(&policy.message_path)
        .or_else(|| body.as_str().map(str::to_string))
        .unwrap_or_else(|| "no error message in response".into());
    let code = policy.code_path.as_deref().and_then(pick);
    (message.chars().take(MESSAGE_LIMIT).collect(), code)
}

/// A `Link` target must stay on the tool's origin and path template.
fn check_link_target(tool: &ResolvedTool, target: &Url) -> Result<(), EngineError> {
    let base = Url::parse(&tool.base_url).map_err(|e| RequestError::InvalidUrl(e.to_string()))?;
    let malformed = || PaginationError::MalformedLinkHeader(format!("next link leaves the declared endpoint ({})", target.path()));
    if target.origin() != base.origin() {
        return Err(malformed().into());
    }
    if !template_regex(base.path(), &tool.path).is_match(target.path()) {
        return Err(malformed().into());
    }
    Ok(())
}

fn template_regex(base_path: &str, template: &str) -> Regex {
    let template = template.split('?').next().unwrap_or_default();
    let mut pattern = String::from("^");
    pattern.push_str(&regex::escape(base_path.trim_end_matches('/')));
    if !template.starts_with('/') {
        pattern.push('/');
    }
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        pattern.push_str(&regex::escape(&rest[..open]));
        match rest[open..].find('}') {
            Some(close) => {
                pattern.push_str("[^/]+");
                rest = &rest[open + close + 1..];
            }
            None => {
                pattern.push_str(&regex::escape(&rest[open..]));
                rest = "";
            }
        }
    }
    pattern.push_str(&regex::escape(rest));
    pattern.push('$');
    Regex::new(&pattern).expect("escaped template pattern")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_matching() {
        let re = template_regex("/v0", "/item/{id}.json");
        assert!(re.is_match("/v0/item/12.json"));
        assert!(!re.is_match("/v0/item/a/b.json"));
        assert!(!re.is_match("/v0/admin"));
        assert!(template_regex("/", "/items").is_match("/items"));
    }

    #[test]
    fn scrubbing() {
        let secrets = vec!["s3cret-token".to_string(), "ab".to_string()];
        assert_eq!(scrub("bad token s3cret-token here", &secrets), "bad token [redacted] here");
        assert_eq!(scrub("ab stays", &secrets), "ab stays");
    }
}
