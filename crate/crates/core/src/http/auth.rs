use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine as _;
use parking_lot::Mutex;
use serde_json::{Map, Value};

use super::request::{join_url, scalar_text};
use crate::credentials::{CredentialError, CredentialResolver};
use crate::model::{AuthConfig, CredentialRef, KeyPlacement, OAuth2Auth, SessionAuth, TemplateValue};
use crate::transform::JsonPath;

/// Token lifetime assumed when the token endpoint omits `expires_in`.
const DEFAULT_TOKEN_LIFETIME: Duration = Duration::from_secs(3600);
const AUTH_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AuthError {
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error("token endpoint failed{}: {message}", status_suffix(*.status))]
    TokenEndpoint { status: Option<u16>, message: String },
    #[error("session login failed{}: {message}", status_suffix(*.status))]
    LoginFailed { status: Option<u16>, message: String },
    #[error("session login response has no token at `{path}`")]
    TokenExtractEmpty { path: String },
}

fn status_suffix(status: Option<u16>) -> String {
    status.map(|s| format!(" with status {s}")).unwrap_or_default()
}

/// Request additions produced by one authentication step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AppliedAuth {
    pub headers: Vec<(String, String)>,
    pub query: Vec<(String, String)>,
    /// Every secret-bearing string used, for scrubbing error text.
    pub secrets: Vec<String>,
    /// Identity of the cached token used, for targeted invalidation.
    pub token_id: u64,
}

#[derive(Debug, Clone)]
struct CachedToken {
    id: u64,
    value: String,
    expires_at: Option<Instant>,
}

type Slot = Arc<tokio::sync::Mutex<Option<CachedToken>>>;

/// Token caches for stateful schemes, keyed by backend and credential ref.
#[derive(Debug, Default)]
pub struct AuthManager {
    slots: Mutex<HashMap<(String, String), Slot>>,
    next_id: Mutex<u64>,
    token_fetches: Mutex<u64>,
}

pub fn primary_credential(auth: &AuthConfig) -> &CredentialRef {
    match auth {
        AuthConfig::Bearer(b) => &b.credential,
        AuthConfig::Basic(b) => &b.username,
        AuthConfig::OAuth2ClientCredentials(o) => &o.client_id,
        AuthConfig::ApiKey(a) => &a.credential,
        AuthConfig::Session(s) => s
            .login
            .body
            .values()
            .find_map(|v| match v {
                TemplateValue::Credential { credential } => Some(credential),
                TemplateValue::Literal(_) => None,
            })
            .unwrap_or(&EMPTY_REF),
    }
}

static EMPTY_REF: CredentialRef = CredentialRef(String::new());

impl AuthManager {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of token-endpoint and login calls made so far.
    pub fn token_fetches(&self) -> u64 {
        *self.token_fetches.lock()
    }

    fn slot(&self, backend: &str, auth: &AuthConfig) -> Slot {
        let key = (backend.to_string(), format!("{}:{}", auth.scheme(), primary_credential(auth)));
        self.slots.lock().entry(key).or_default().clone()
    }

    fn fresh_id(&self) -> u64 {
        let mut n = self.next_id.lock();
        *n += 1;
        *n
    }

    pub async fn apply(
        &self,
        client: &reqwest::Client,
        backend: &str,
        base_url: &str,
        auth: &AuthConfig,
        resolver: &CredentialResolver,
    ) -> Result<AppliedAuth, AuthError> {
        let mut out = AppliedAuth::default();
        match auth {
            AuthConfig::Bearer(b) => {
                let token = resolver.resolve(&b.credential)?.expose_str();
                out.headers.push((b.header_name.clone(), format!("{}{}", b.prefix, token)));
                out.secrets.push(token);
            }
            AuthConfig::Basic(b) => {
                let user = resolver.resolve(&b.username)?.expose_str();
                let pass = resolver.resolve(&b.password)?.expose_str();
                let encoded = base64::engine::general_purpose::STANDARD.encode(format!("{user}:{pass}"));
                out.headers.push(("Authorization".into(), format!("Basic {encoded}")));
                out.secrets.extend([user, pass, encoded]);
            }
            AuthConfig::ApiKey(a) => {
                let key = resolver.resolve(&a.credential)?.expose_str();
                match a.placement {
                    KeyPlacement::Header => out.headers.push((a.name.clone(), key.clone())),
                    KeyPlacement::Query => out.query.push((a.name.clone(), key.clone())),
                }
                out.secrets.push(key);
            }
            AuthConfig::OAuth2ClientCredentials(o) => {
                let slot = self.slot(backend, auth);
                let mut guard = slot.lock().await;
                let reusable = guard.as_ref().filter(|t| match t.expires_at {
                    Some(exp) => Instant::now() + o.refresh_margin < exp,
                    None => true,
                });
                let token = match reusable {
                    Some(t) => t.clone(),
                    None => {
                        let t = self.fetch_oauth_token(client, o, resolver, &mut out.secrets).await?;
                        *guard = Some(t.clone());
                        t
                    }
                };
                out.headers.push(("Authorization".into(), format!("Bearer {}", token.value)));
                out.secrets.push(token.value);
                out.token_id = token.id;
            }
            AuthConfig::Session(s) => {
                let slot = self.slot(backend, auth);
                let mut guard = slot.lock().await;
                let token = match guard.as_ref() {
                    Some(t) => t.clone(),
                    None => {
                        let t = self.login(client, base_url, s, resolver, &mut out.secrets).await?;
                        *guard = Some(t.clone());
                        t
                    }
                };
                out.headers.push((s.token_header.clone(), format!("{}{}", s.token_prefix, token.value)));
                out.secrets.push(token.value);
                out.token_id = token.id;
            }
        }
        Ok(out)
    }

    /// Drop the cached token if it is still the one identified by `token_id`.
    pub async fn invalidate(&self, backend: &str, auth: &AuthConfig, token_id: u64) {
        if matches!(auth, AuthConfig::OAuth2ClientCredentials(_) | AuthConfig::Session(_)) {
            let slot = self.slot(backend, auth);
            let mut guard = slot.lock().await;
            if guard.as_ref().is_some_and(|t| t.id == token_id) {
                *guard = None;
            }
        }
    }

    async fn fetch_oauth_token(
        &self,
        client: &reqwest::Client,
        o: &OAuth2Auth,
        resolver: &CredentialResolver,
        secrets: &mut Vec<String>,
    ) -> Result<CachedToken, AuthError> {
        let id = resolver.resolve(&o.client_id)?.expose_str();
        let secret = resolver.resolve(&o.client_secret)?.expose_str();
        secrets.push(id.clone());
        secrets.push(secret.clone());
        let mut form = vec![
            ("grant_type", "client_credentials".to_string()),
            ("client_id", id),
            ("client_secret", secret),
        ];
        if !o.scopes.is_empty() {
            form.push(("scope", o.scopes.join(" ")));
        }
        *self.token_fetches.lock() += 1;
        let started = Instant::now();
        let resp = client
            .post(&o.token_url)
            .timeout(AUTH_TIMEOUT)
            .form(&form)
            .send()
            .await
            .map_err(|e| AuthError::TokenEndpoint { status: None, message: e.without_url().to_string() })?;
        let status = resp.status().as_u16();
        let body: Value = resp.json().await.unwrap_or(Value::Null);
        if !(200..300).contains(&status) {
            return Err(AuthError::TokenEndpoint { status: Some(status), message: error_text(&body) });
        }
        let value = body
            .get("access_token")
            .and_then(Value::as_str)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| AuthError::TokenEndpoint { status: Some(status), message: "response has no access_token".into() })?
            .to_string();
        let lifetime = body.get("expires_in").and_then(Value::as_f64).map_or(DEFAULT_TOKEN_LIFETIME, |s| {
            Duration::from_secs_f64(s.max(0.0))
        });
        Ok(CachedToken { id: self.fresh_id(), value, expires_at: Some(started + lifetime) })
    }

    async fn login(
        &self,
        client: &reqwest::Client,
        base_url: &str,
        s: &SessionAuth,
        resolver: &CredentialResolver,
        secrets: &mut Vec<String>,
    ) -> Result<CachedToken, AuthError> {
        let mut body = Map::new();
        for (k, v) in &s.login.body {
            let value = match v {
                TemplateValue::Credential { credential } => {
                    let secret = resolver.resolve(credential)?.expose_str();
                    secrets.push(secret.clone());
                    Value::String(secret)
                }
                TemplateValue::Literal(l) => l.clone(),
            };
            body.insert(k.clone(), value);
        }
        let url = join_url(base_url, &s.login.path)
            .map_err(|e| AuthError::LoginFailed { status: None, message: e.to_string() })?;
        let method = reqwest::Method::from_bytes(s.login.method.as_str().as_bytes()).expect("static method");
        *self.token_fetches.lock() += 1;
        let resp = client
            .request(method, url)
            .timeout(AUTH_TIMEOUT)
            .json(&Value::Object(body))
            .send()
            .await
            .map_err(|e| AuthError::LoginFailed { status: None, message: e.without_url().to_string() })?;
        let status = resp.status().as_u16();
        let doc: Value = resp.json().await.unwrap_or(Value::Null);
        if !(200..300).contains(&status) {
            return Err(AuthError::LoginFailed { status: Some(status), message: error_text(&doc) });
        }
        let path = JsonPath::parse(&s.token_extract)
            .map_err(|_| AuthError::TokenExtractEmpty { path: s.token_extract.clone() })?;
        let token = match path.first(&doc) {
            Some(v @ (Value::String(_) | Value::Number(_))) => scalar_text(v),
            _ => String::new(),
        };
        if token.is_empty() {
            return Err(AuthError::TokenExtractEmpty { path: s.token_extract.clone() });
        }
        Ok(CachedToken { id: self.fresh_id(), value: token, expires_at: None })
    }
}

fn error_text(body: &Value) -> String {
    ["error_description", "message", "error"]
        .iter()
        .find_map(|k| body.get(*k).and_then(Value::as_str))
        .unwrap_or("request rejected")
        .chars()
        .take(200)
        .collect()
}
