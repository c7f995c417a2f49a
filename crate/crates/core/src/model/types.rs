use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::num::NonZeroU32;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use super::duration;

/// Parsed and normalized form of one `.dadl` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DadlDocument {
    #[serde(rename = "spec", default, skip_serializing_if = "Option::is_none")]
    pub spec_url: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub credits: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    pub backend: BackendDef,
    /// Absent for public APIs that need no authentication.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth: Option<AuthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defaults: Option<ToolDefaults>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub types: BTreeMap<String, Value>,
    pub tools: BTreeMap<String, ToolDef>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub composites: BTreeMap<String, CompositeDef>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hints: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_policy: Option<ErrorPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit: Option<RateLimitPolicy>,
    /// True iff `composites` is non-empty; computed at parse time.
    #[serde(default)]
    pub contains_code: bool,
}

impl DadlDocument {
    pub fn name(&self) -> &str {
        &self.backend.name
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendDef {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub version: String,
    pub base_url: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Rest,
}

/// Logical credential name such as `vault/my-api-token`. Never a secret.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CredentialRef(pub String);

impl CredentialRef {
    pub fn new(s: impl Into<String>) -> Self {
        CredentialRef(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Namespace before the first `/`, if the ref is well formed.
    pub fn namespace(&self) -> Option<&str> {
        self.0.split_once('/').map(|(ns, _)| ns)
    }

    pub fn key(&self) -> Option<&str> {
        self.0.split_once('/').map(|(_, k)| k)
    }

    /// Syntax check: non-empty, no whitespace, `namespace/key` with both parts present.
    pub fn is_well_formed(&self) -> bool {
        !self.0.is_empty()
            && !self.0.chars().any(char::is_whitespace)
            && matches!(self.0.split_once('/'), Some((ns, k)) if !ns.is_empty() && !k.is_empty())
    }
}

impl fmt::Display for CredentialRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AuthConfig {
    Bearer(BearerAuth),
    Basic(BasicAuth),
    #[serde(rename = "oauth2_client_credentials", alias = "oauth2")]
    OAuth2ClientCredentials(OAuth2Auth),
    Session(SessionAuth),
    ApiKey(ApiKeyAuth),
}

impl AuthConfig {
    pub fn scheme(&self) -> &'static str {
        match self {
            AuthConfig::Bearer(_) => "bearer",
            AuthConfig::Basic(_) => "basic",
            AuthConfig::OAuth2ClientCredentials(_) => "oauth2_client_credentials",
            AuthConfig::Session(_) => "session",
            AuthConfig::ApiKey(_) => "api_key",
        }
    }

    /// Every credential reference together with the YAML path it sits at.
    pub fn credential_refs(&self) -> Vec<(String, &CredentialRef)> {
        match self {
            AuthConfig::Bearer(b) => vec![("auth.credential".into(), &b.credential)],
            AuthConfig::Basic(b) => vec![
                ("auth.username".into(), &b.username),
                ("auth.password".into(), &b.password),
            ],
            AuthConfig::OAuth2ClientCredentials(o) => vec![
                ("auth.client_id".into(), &o.client_id),
                ("auth.client_secret".into(), &o.client_secret),
            ],
            AuthConfig::Session(s) => s
                .login
                .body
                .iter()
                .filter_map(|(k, v)| match v {
                    TemplateValue::Credential { credential } => {
                        Some((format!("auth.login.body.{k}"), credential))
                    }
                    TemplateValue::Literal(_) => None,
                })
                .collect(),
            AuthConfig::ApiKey(a) => vec![("auth.credential".into(), &a.credential)],
        }
    }
}

fn default_auth_header() -> String {
    "Authorization".into()
}

fn default_bearer_prefix() -> String {
    "Bearer ".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BearerAuth {
    pub credential: CredentialRef,
    #[serde(default = "default_auth_header")]
    pub header_name: String,
    #[serde(default = "default_bearer_prefix")]
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasicAuth {
    pub username: CredentialRef,
    pub password: CredentialRef,
}

fn default_refresh_margin() -> Duration {
    Duration::from_secs(60)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OAuth2Auth {
    pub token_url: String,
    pub client_id: CredentialRef,
    pub client_secret: CredentialRef,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scopes: Vec<String>,
    #[serde(default = "default_refresh_margin", with = "duration")]
    pub refresh_margin: Duration,
}

fn default_relogin() -> Vec<u16> {
    vec![401]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionAuth {
    pub login: LoginCall,
    pub token_extract: String,
    pub token_header: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub token_prefix: String,
    #[serde(default = "default_relogin")]
    pub relogin_on: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoginCall {
    #[serde(default = "default_login_method")]
    pub method: HttpMethod,
    pub path: String,
    #[serde(default)]
    pub body: BTreeMap<String, TemplateValue>,
}

fn default_login_method() -> HttpMethod {
    HttpMethod::Post
}

/// A login body field: either a credential reference or a literal JSON value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateValue {
    Credential { credential: CredentialRef },
    Literal(Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiKeyAuth {
    pub credential: CredentialRef,
    #[serde(default)]
    pub placement: KeyPlacement,
    pub name: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyPlacement {
    #[default]
    Header,
    Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Post,
    Put,
    Patch,
    Delete,
    Head,
}

impl HttpMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
            HttpMethod::Put => "PUT",
            HttpMethod::Patch => "PATCH",
            HttpMethod::Delete => "DELETE",
            HttpMethod::Head => "HEAD",
        }
    }

    /// Methods whose undeclared-location params default to the query string.
    pub fn prefers_query(self) -> bool {
        matches!(self, HttpMethod::Get | HttpMethod::Delete | HttpMethod::Head)
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `access` label on a tool or composite. Custom values pass through verbatim.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccessLabel(String);

pub const WELL_KNOWN_LABELS: [&str; 4] = ["read", "write", "admin", "dangerous"];

impl AccessLabel {
    pub fn new(value: impl Into<String>) -> Result<Self, String> {
        let value = value.into();
        if value.trim().is_empty() {
            return Err("access label must not be empty".into());
        }
        Ok(AccessLabel(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn well_known(&self) -> bool {
        WELL_KNOWN_LABELS.contains(&self.0.as_str())
    }

    /// Position in the read < write < admin < dangerous order; `None` for custom labels.
    pub fn rank(&self) -> Option<usize> {
        WELL_KNOWN_LABELS.iter().position(|l| *l == self.0)
    }
}

impl fmt::Display for AccessLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for AccessLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for AccessLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        AccessLabel::new(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamLocation {
    Path,
    Query,
    Body,
    Header,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDef {
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(rename = "$ref", default, skip_serializing_if = "Option::is_none")]
    pub schema_ref: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(alias = "in", default, skip_serializing_if = "Option::is_none")]
    pub location: Option<ParamLocation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(rename = "enum", default, skip_serializing_if = "Option::is_none")]
    pub allowed: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaginationStrategy {
    Cursor,
    Offset,
    Page,
    LinkHeader,
}

impl PaginationStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            PaginationStrategy::Cursor => "cursor",
            PaginationStrategy::Offset => "offset",
            PaginationStrategy::Page => "page",
            PaginationStrategy::LinkHeader => "link_header",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaginationBehavior {
    #[default]
    Auto,
    Expose,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestParamNames {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cursor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_size: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponsePaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_cursor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<String>,
}

fn default_page_size() -> NonZeroU32 {
    NonZeroU32::new(50).unwrap()
}

fn default_max_pages() -> NonZeroU32 {
    NonZeroU32::new(10).unwrap()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaginationConfig {
    pub strategy: PaginationStrategy,
    #[serde(default)]
    pub request_params: RequestParamNames,
    #[serde(default)]
    pub response_paths: ResponsePaths,
    #[serde(default = "default_page_size")]
    pub page_size: NonZeroU32,
    #[serde(default = "default_max_pages")]
    pub max_pages: NonZeroU32,
    #[serde(default)]
    pub behavior: PaginationBehavior,
}

impl PaginationConfig {
    /// Role names required by the strategy that are missing.
    pub fn missing_roles(&self) -> Vec<&'static str> {
        let mut missing = Vec::new();
        match self.strategy {
            PaginationStrategy::Cursor => {
                if self.request_params.cursor.is_none() {
                    missing.push("request_params.cursor");
                }
                if self.response_paths.next_cursor.is_none() {
                    missing.push("response_paths.next_cursor");
                }
            }
            PaginationStrategy::Offset => {
                if self.request_params.offset.is_none() {
                    missing.push("request_params.offset");
                }
            }
            PaginationStrategy::Page => {
                if self.request_params.page.is_none() {
                    missing.push("request_params.page");
                }
            }
            PaginationStrategy::LinkHeader => {}
        }
        missing
    }
}

/// `pagination:` value: `none` disables inherited pagination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PaginationSetting {
    Disabled,
    Enabled(PaginationConfig),
}

impl Serialize for PaginationSetting {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PaginationSetting::Disabled => s.serialize_str("none"),
            PaginationSetting::Enabled(cfg) => cfg.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for PaginationSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = Value::deserialize(d)?;
        match &raw {
            Value::String(s) if s == "none" => Ok(PaginationSetting::Disabled),
            Value::String(s) => Err(D::Error::custom(format!(
                "pagination must be a mapping or \"none\", got {s:?}"
            ))),
            Value::Object(map) => {
                if map.get("strategy").and_then(Value::as_str) == Some("none") {
                    if map.len() > 1 {
                        return Err(D::Error::custom(
                            "pagination strategy \"none\" carries no other fields",
                        ));
                    }
                    return Ok(PaginationSetting::Disabled);
                }
                serde_json::from_value(raw)
                    .map(PaginationSetting::Enabled)
                    .map_err(D::Error::custom)
            }
            other => Err(D::Error::custom(format!(
                "pagination must be a mapping or \"none\", got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolExample {
    #[serde(default)]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Sample upstream payload, used to size-check transforms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolDef {
    pub method: HttpMethod,
    pub path: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub access: Option<AccessLabel>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, ParamDef>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub headers: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pagination: Option<PaginationSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_items: Option<NonZeroU32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_jq_override: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "duration::option")]
    pub timeout: Option<Duration>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub examples: Vec<ToolExample>,
}

/// File-wide defaults inherited by every tool.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolDefaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pagination: Option<PaginationSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_items: Option<NonZeroU32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_jq_override: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "duration::option")]
    pub timeout: Option<Duration>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub headers: BTreeMap<String, String>,
}

pub const COMPOSITE_DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const COMPOSITE_MAX_TIMEOUT: Duration = Duration::from_secs(120);
pub const COMPOSITE_DEFAULT_MAX_API_CALLS: u32 = 50;

fn default_composite_timeout() -> Duration {
    COMPOSITE_DEFAULT_TIMEOUT
}

fn default_max_api_calls() -> NonZeroU32 {
    NonZeroU32::new(COMPOSITE_DEFAULT_MAX_API_CALLS).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeDef {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, ParamDef>,
    #[serde(default = "default_composite_timeout", with = "duration")]
    pub timeout: Duration,
    #[serde(default = "default_max_api_calls")]
    pub max_api_calls: NonZeroU32,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub access: Option<AccessLabel>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tools_defined: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated_total: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_reviewed: Option<String>,
}

fn default_max_attempts() -> u32 {
    3
}

fn default_base_delay() -> Duration {
    Duration::from_secs(1)
}

fn default_multiplier() -> f64 {
    2.0
}

fn default_max_delay() -> Duration {
    Duration::from_secs(30)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_base_delay", with = "duration")]
    pub base_delay: Duration,
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    #[serde(default = "default_max_delay", with = "duration")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: default_max_attempts(),
            base_delay: default_base_delay(),
            multiplier: default_multiplier(),
            max_delay: default_max_delay(),
        }
    }
}

fn default_message_path() -> String {
    "$.message".into()
}

fn default_retryable() -> BTreeSet<u16> {
    [502, 503, 504].into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorPolicy {
    #[serde(default = "default_message_path")]
    pub message_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_path: Option<String>,
    #[serde(default)]
    pub terminal_statuses: BTreeSet<u16>,
    #[serde(default = "default_retryable")]
    pub retryable_statuses: BTreeSet<u16>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl Default for ErrorPolicy {
    fn default() -> Self {
        ErrorPolicy {
            message_path: default_message_path(),
            code_path: None,
            terminal_statuses: BTreeSet::new(),
            retryable_statuses: default_retryable(),
            retry: RetryPolicy::default(),
        }
    }
}

fn default_remaining_header() -> String {
    "X-RateLimit-Remaining".into()
}

fn default_retry_after_header() -> String {
    "Retry-After".into()
}

fn default_pause_threshold() -> u64 {
    1
}

fn default_true() -> bool {
    true
}

fn default_pause() -> Duration {
    Duration::from_secs(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLimitPolicy {
    #[serde(default = "default_remaining_header")]
    pub remaining_header: String,
    #[serde(default = "default_retry_after_header")]
    pub retry_after_header: String,
    /// Header carrying the window reset (seconds until reset), consulted when
    /// no Retry-After is present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset_header: Option<String>,
    #[serde(default = "default_pause_threshold")]
    pub pause_threshold: u64,
    #[serde(default = "default_true")]
    pub shared_per_credential: bool,
    #[serde(default = "default_pause", with = "duration")]
    pub default_pause: Duration,
}

impl Default for RateLimitPolicy {
    fn default() -> Self {
        RateLimitPolicy {
            remaining_header: default_remaining_header(),
            retry_after_header: default_retry_after_header(),
            reset_header: None,
            pause_threshold: default_pause_threshold(),
            shared_per_credential: true,
            default_pause: default_pause(),
        }
    }
}
