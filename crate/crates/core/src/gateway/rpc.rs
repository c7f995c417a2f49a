//! JSON-RPC 2.0 framing of the gateway over NDJSON stdio and HTTP POST.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde_json::{json, Value};
use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncWrite, AsyncWriteExt};
use tokio::sync::mpsc;

use super::{describe_error, meta_tools, native_name, native_tool, Gateway, DEFAULT_K};
use crate::authz::Principal;
use crate::credentials::CredentialError;

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const UNAUTHORIZED: i64 = -32001;

pub const PROTOCOL_VERSION: &str = "2025-06-18";
/// Principal of sessions that present no identity.
pub const ANONYMOUS: &str = "anonymous";

/// Per-connection state.
#[derive(Debug, Clone)]
pub struct Session {
    pub principal: Principal,
    /// Whether `initialize` may name the principal (stdio only).
    pub handshake_principal: bool,
}

pub fn error_response(id: Value, code: i64, message: impl Into<String>) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "error": { "code": code, "message": message.into() } })
}

fn result_response(id: Value, result: Value) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "result": result })
}

fn tool_text(value: &Value, structured: Value, is_error: bool) -> Value {
    let text = match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    json!({
        "content": [{ "type": "text", "text": text }],
        "structuredContent": structured,
        "isError": is_error,
    })
}

fn tool_error(message: String) -> Value {
    json!({ "content": [{ "type": "text", "text": message }], "isError": true })
}

impl Gateway {
    /// Handle one raw message (a request, notification or batch). `None` means no reply.
    pub async fn handle_text(&self, session: &mut Session, text: &str) -> Option<Value> {
        let parsed: Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => return Some(error_response(Value::Null, PARSE_ERROR, format!("parse error: {e}"))),
        };
        match parsed {
            Value::Array(items) if items.is_empty() => Some(error_response(Value::Null, INVALID_REQUEST, "empty batch")),
            Value::Array(items) => {
                let mut out = Vec::new();
                for item in items {
                    if let Some(r) = self.handle_request(session, item).await {
                        out.push(r);
                    }
                }
                (!out.is_empty()).then_some(Value::Array(out))
            }
            other => self.handle_request(session, other).await,
        }
    }

    pub async fn handle_request(&self, session: &mut Session, req: Value) -> Option<Value> {
        let Value::Object(obj) = req else {
            return Some(error_response(Value::Null, INVALID_REQUEST, "request must be an object"));
        };
        let id = obj.get("id").cloned();
        let method = obj.get("method").and_then(Value::as_str);
        let valid = obj.get("jsonrpc").and_then(Value::as_str) == Some("2.0")
            && method.is_some()
            && id.as_ref().is_none_or(|i| i.is_string() || i.is_number() || i.is_null());
        if !valid {
            return Some(error_response(id.unwrap_or(Value::Null), INVALID_REQUEST, "invalid JSON-RPC 2.0 request"));
        }
        let method = method.expect("checked");
        let params = obj.get("params").cloned().unwrap_or(Value::Null);
        let Some(id) = id else {
            tracing::debug!(method, "notification");
            return None;
        };
        Some(match self.dispatch(session, method, &params).await {
            Ok(result) => result_response(id, result),
            Err((code, message)) => error_response(id, code, message),
        })
    }

    async fn dispatch(&self, session: &mut Session, method: &str, params: &Value) -> Result<Value, (i64, String)> {
        match method {
            "initialize" => {
                if let Some(p) = params.get("principal") {
                    let pid = p.as_str().filter(|s| !s.is_empty()).ok_or((INVALID_PARAMS, "principal must be a non-empty string".into()))?;
                    if !session.handshake_principal {
                        return Err((INVALID_PARAMS, "this transport takes the principal from the bearer token".into()));
                    }
                    session.principal = self.runtime().policy().principal(pid);
                }
                Ok(json!({
                    "protocolVersion": params.get("protocolVersion").and_then(Value::as_str).unwrap_or(PROTOCOL_VERSION),
                    "capabilities": { "tools": { "listChanged": false } },
                    "serverInfo": { "name": "dadl-gateway", "version": env!("CARGO_PKG_VERSION") },
                    "instructions": super::INSTRUCTIONS,
                }))
            }
            "ping" => Ok(json!({})),
            "tools/list" => Ok(json!({ "tools": self.list_tools() })),
            "tools/call" => self.call_tool(session, params).await,
            other => Err((METHOD_NOT_FOUND, format!("method not found: {other}"))),
        }
    }

    /// The two meta-tools, plus every entry when native exposure is on.
    pub fn list_tools(&self) -> Vec<Value> {
        let mut tools = meta_tools(self.config());
        if self.config().expose_native {
            tools.extend(self.store().snapshot().entries().iter().map(native_tool));
        }
        tools
    }

    async fn call_tool(&self, session: &Session, params: &Value) -> Result<Value, (i64, String)> {
        let name = params.get("name").and_then(Value::as_str).ok_or((INVALID_PARAMS, "missing tool name".into()))?;
        let args = params.get("arguments").cloned().unwrap_or_else(|| json!({}));
        if !args.is_object() {
            return Err((INVALID_PARAMS, "arguments must be an object".into()));
        }
        match name {
            "search" => {
                let query = args.get("query").and_then(Value::as_str).filter(|q| !q.trim().is_empty());
                let query = query.ok_or((INVALID_PARAMS, "search needs a non-empty `query` string".into()))?;
                let k = match args.get("k") {
                    None | Some(Value::Null) => DEFAULT_K,
                    Some(v) => v.as_u64().filter(|k| *k >= 1).ok_or((INVALID_PARAMS, "`k` must be a positive integer".into()))? as usize,
                };
                let results = self.search(query, k);
                let value = json!({ "results": results });
                Ok(tool_text(&value, value.clone(), false))
            }
            "execute" => {
                let script = args.get("script").and_then(Value::as_str).ok_or((INVALID_PARAMS, "execute needs a `script` string".into()))?;
                let jq = match args.get("jq_override") {
                    None | Some(Value::Null) => None,
                    Some(Value::String(s)) => Some(s.as_str()),
                    Some(_) => return Err((INVALID_PARAMS, "`jq_override` must be a string".into())),
                };
                match self.execute(script, &session.principal, jq).await {
                    Ok(out) => {
                        let structured = json!({ "result": out.result, "api_calls": out.api_calls, "logs": out.logs });
                        Ok(tool_text(&out.result, structured, false))
                    }
                    Err(e) => Ok(tool_error(describe_error(&e))),
                }
            }
            native if self.config().expose_native => {
                let catalog = self.store().snapshot();
                let entry = catalog
                    .entries()
                    .iter()
                    .find(|e| native_name(&e.address) == native)
                    .ok_or((INVALID_PARAMS, format!("unknown tool: {native}")))?;
                let address = entry.address.clone();
                drop(catalog);
                match self.call_native(&address, args, &session.principal).await {
                    Ok(v) => Ok(tool_text(&v, json!({ "result": v }), false)),
                    Err(e) => Ok(tool_error(format!("{}: {}", e.kind.as_str(), e.message))),
                }
            }
            other => Err((INVALID_PARAMS, format!("unknown tool: {other}"))),
        }
    }
}

/// Serve newline-delimited JSON-RPC until `reader` closes. Requests run concurrently;
/// `initialize` is handled in order so it can set the session principal.
pub async fn serve_stdio<R, W>(gateway: Arc<Gateway>, reader: R, mut writer: W, principal: Principal) -> std::io::Result<()>
where
    R: AsyncBufRead + Unpin,
    W: AsyncWrite + Unpin + Send + 'static,
{
    let (tx, mut rx) = mpsc::unbounded_channel::<Value>();
    let writer_task = tokio::spawn(async move {
        while let Some(msg) = rx.recv().await {
            let mut line = msg.to_string();
            line.push('\n');
            writer.write_all(line.as_bytes()).await?;
            writer.flush().await?;
        }
        Ok::<_, std::io::Error>(())
    });
    let mut session = Session { principal, handshake_principal: true };
    let mut lines = reader.lines();
    let mut inflight = Vec::new();
    while let Some(line) = lines.next_line().await? {
        if line.trim().is_empty() {
            continue;
        }
        let sequential = serde_json::from_str::<Value>(&line)
            .map(|v| !matches!(v.get("method").and_then(Value::as_str), Some("tools/call")))
            .unwrap_or(true);
        if sequential {
            if let Some(resp) = gateway.handle_text(&mut session, &line).await {
                let _ = tx.send(resp);
            }
        } else {
            let gateway = gateway.clone();
            let mut s = session.clone();
            let tx = tx.clone();
            inflight.push(tokio::spawn(async move {
                if let Some(resp) = gateway.handle_text(&mut s, &line).await {
                    let _ = tx.send(resp);
                }
            }));
        }
    }
    for t in inflight {
        let _ = t.await;
    }
    drop(tx);
    writer_task.await.map_err(std::io::Error::other)??;
    Ok(())
}

/// Bearer token to principal id, built from the policy file's `principals`.
pub struct TokenMap(Vec<(String, String)>);

impl TokenMap {
    pub fn from_policy(gateway: &Gateway) -> Result<TokenMap, CredentialError> {
        let resolver = gateway.runtime().engine().resolver();
        let mut out = Vec::new();
        for (id, entry) in &gateway.runtime().policy().principals {
            if let Some(r) = &entry.token {
                out.push((resolver.resolve(r)?.expose_str(), id.clone()));
            }
        }
        Ok(TokenMap(out))
    }

    pub fn lookup(&self, token: &str) -> Option<&str> {
        self.0.iter().find(|(t, _)| constant_time_eq(t.as_bytes(), token.as_bytes())).map(|(_, id)| id.as_str())
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Clone)]
struct HttpState {
    gateway: Arc<Gateway>,
    tokens: Arc<TokenMap>,
}

fn json_reply(status: StatusCode, body: Value) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body.to_string()).into_response()
}

async fn rpc_handler(State(state): State<HttpState>, headers: HeaderMap, body: Bytes) -> Response {
    let principal = match headers.get(header::AUTHORIZATION).map(|v| v.to_str().unwrap_or("")) {
        None => state.gateway.runtime().policy().principal(ANONYMOUS),
        Some(value) => match value.strip_prefix("Bearer ").and_then(|t| state.tokens.lookup(t.trim())) {
            Some(id) => state.gateway.runtime().policy().principal(id),
            None => return json_reply(StatusCode::UNAUTHORIZED, error_response(Value::Null, UNAUTHORIZED, "unknown bearer token")),
        },
    };
    let mut session = Session { principal, handshake_principal: false };
    let text = String::from_utf8_lossy(&body);
    match state.gateway.handle_text(&mut session, &text).await {
        Some(resp) => json_reply(StatusCode::OK, resp),
        None => StatusCode::ACCEPTED.into_response(),
    }
}

async fn health(State(state): State<HttpState>) -> Response {
    let catalog = state.gateway.store().snapshot();
    json_reply(StatusCode::OK, json!({ "status": "ok", "generation": catalog.generation(), "tools": catalog.len() }))
}

pub fn http_router(gateway: Arc<Gateway>) -> Result<Router, CredentialError> {
    let tokens = Arc::new(TokenMap::from_policy(&gateway)?);
    let state = HttpState { gateway, tokens };
    Ok(Router::new()
        .route("/", post(rpc_handler))
        .route("/mcp", post(rpc_handler))
        .route("/health", get(health))
        .with_state(state))
}

/// Serve JSON-RPC over HTTP POST on `listener` until `shutdown` resolves.
pub async fn serve_http(
    gateway: Arc<Gateway>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let router = http_router(gateway).map_err(std::io::Error::other)?;
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    tracing::info!(?addr, "gateway listening");
    axum::serve(listener, router).with_graceful_shutdown(shutdown).await
}
