//! Sandboxed execution of JavaScript snippets against a typed `api` binding.
//!
//! Scripts run in a small purpose-built interpreter on a dedicated thread. The
//! only capability a script has is the `api` object; there is no network,
//! filesystem, module loader, timer, clock or randomness.

mod builtins;
mod interp;
mod lexer;
pub mod parser;
mod scope;
mod value;

use std::fmt;
use std::panic::AssertUnwindSafe;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, LazyLock};
use std::time::{Duration, Instant};

use futures::future::BoxFuture;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const MAX_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_MAX_API_CALLS: u32 = 50;
pub const DEFAULT_MAX_OUTPUT_BYTES: usize = 1 << 20;

const FORBIDDEN: &[&str] = &[
    "fetch", "require", "import", "eval", "Function", "XMLHttpRequest", "WebSocket", "process", "globalThis",
];

static FORBIDDEN_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"\b({})\b", FORBIDDEN.join("|"))).expect("static regex"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub token: String,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}` at {}:{}", self.token, self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SandboxError {
    #[error("script references forbidden capabilities: {}", join_violations(.0))]
    StaticViolation(Vec<Violation>),
    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("unsupported construct at line {line}: {construct}")]
    Unsupported { construct: String, line: usize },
    #[error("script exceeded its time limit of {}", crate::model::duration::render(*.0))]
    Timeout(Duration),
    #[error("script exceeded its limit of {limit} api calls")]
    CallCapExceeded { limit: u32 },
    #[error("script failed: {0}")]
    ScriptError(String),
    #[error("script result is {bytes} bytes, over the {limit} byte limit")]
    OutputTooLarge { bytes: usize, limit: usize },
    #[error("invalid sandbox limits: {0}")]
    InvalidLimits(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl SandboxError {
    pub fn kind(&self) -> &'static str {
        match self {
            SandboxError::StaticViolation(_) => "static_violation",
            SandboxError::Syntax { .. } => "syntax_error",
            SandboxError::Unsupported { .. } => "unsupported_construct",
            SandboxError::Timeout(_) => "timeout",
            SandboxError::CallCapExceeded { .. } => "call_cap_exceeded",
            SandboxError::ScriptError(_) => "script_error",
            SandboxError::OutputTooLarge { .. } => "output_too_large",
            SandboxError::InvalidLimits(_) => "invalid_limits",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxLimits {
    #[serde(with = "crate::model::duration")]
    pub timeout: Duration,
    pub max_api_calls: u32,
    pub max_output_bytes: usize,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        SandboxLimits {
            timeout: DEFAULT_TIMEOUT,
            max_api_calls: DEFAULT_MAX_API_CALLS,
            max_output_bytes: DEFAULT_MAX_OUTPUT_BYTES,
        }
    }
}

impl SandboxLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.timeout.is_zero() || self.timeout > MAX_TIMEOUT {
            return Err(SandboxError::InvalidLimits(format!(
                "timeout must be between 1ms and {}",
                crate::model::duration::render(MAX_TIMEOUT)
            )));
        }
        if self.max_api_calls == 0 {
            return Err(SandboxError::InvalidLimits("max_api_calls must be at least 1".into()));
        }
        if self.max_output_bytes == 0 {
            return Err(SandboxError::InvalidLimits("max_output_bytes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiErrorKind {
    Denied,
    UnknownTool,
    InvalidParams,
    Upstream,
    Timeout,
    RateLimited,
    Internal,
}

impl ApiErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ApiErrorKind::Denied => "denied",
            ApiErrorKind::UnknownTool => "unknown_tool",
            ApiErrorKind::InvalidParams => "invalid_params",
            ApiErrorKind::Upstream => "upstream",
            ApiErrorKind::Timeout => "timeout",
            ApiErrorKind::RateLimited => "rate_limited",
            ApiErrorKind::Internal => "internal",
        }
    }
}

/// Failure of one `api.*` call, surfaced to the script as a catchable `ApiError`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{}: {message}", kind.as_str())]
pub struct ApiError {
    pub kind: ApiErrorKind,
    pub message: String,
    pub status: Option<u16>,
}

impl ApiError {
    pub fn new(kind: ApiErrorKind, message: impl Into<String>) -> Self {
        ApiError { kind, message: message.into(), status: None }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ApiErrorKind::Internal, message)
    }
}

/// What a name under `api` refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApiName {
    /// A callable tool, with its fully qualified name.
    Tool(String),
    /// A backend namespace whose members are tools.
    Namespace,
    Unknown,
}

/// The typed surface exposed to scripts as `api`.
pub trait ApiBinding: Send + Sync {
    /// Resolve `name` (`tool`, `backend` or `backend.tool`).
    fn resolve(&self, name: &str) -> ApiName;
    fn call(&self, tool: &str, params: Value) -> BoxFuture<'static, Result<Value, ApiError>>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScriptOutcome {
    pub value: Value,
    pub api_calls: u32,
    pub logs: Vec<String>,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Scan for references to capabilities the sandbox does not provide.
///
/// Deliberately conservative: matches inside strings and comments count too.
pub fn static_check(code: &str) -> Vec<Violation> {
    FORBIDDEN_RE
        .find_iter(code)
        .map(|m| {
            let before = &code[..m.start()];
            let line = before.matches('\n').count() + 1;
            let line_start = before.rfind('\n').map_or(0, |i| i + 1);
            Violation {
                token: m.as_str().to_string(),
                line,
                column: code[line_start..m.start()].chars().count() + 1,
            }
        })
        .collect()
}

pub fn parse_script(code: &str) -> Result<parser::Script, SandboxError> {
    parser::parse(code)
}

/// Execute `code` with `params` bound as a global and `api` backed by `binding`.
pub async fn run_script(
    code: &str,
    binding: Arc<dyn ApiBinding>,
    params: Value,
    limits: SandboxLimits,
) -> Result<ScriptOutcome, SandboxError> {
    limits.validate()?;
    let violations = static_check(code);
    if !violations.is_empty() {
        return Err(SandboxError::StaticViolation(violations));
    }
    let handle = tokio::runtime::Handle::current();
    let cancel = Arc::new(AtomicBool::new(false));
    let (tx, rx) = tokio::sync::oneshot::channel();
    let started = Instant::now();
    let code = code.to_string();
    let thread_cancel = cancel.clone();
    std::thread::Builder::new()
        .name("dadl-script".into())
        .stack_size(64 << 20)
        .spawn(move || {
            let result = std::panic::catch_unwind(AssertUnwindSafe(|| {
                interp::execute(&code, binding, &params, &limits, handle, thread_cancel, started)
            }))
            .unwrap_or_else(|_| Err(SandboxError::ScriptError("internal interpreter error".into())));
            let _ = tx.send(result);
        })
        .map_err(|e| SandboxError::ScriptError(format!("could not start script thread: {e}")))?;

    let grace = Duration::from_millis(250);
    match tokio::time::timeout(limits.timeout + grace, rx).await {
        Ok(Ok(result)) => result,
        Ok(Err(_)) => Err(SandboxError::ScriptError("script thread exited unexpectedly".into())),
        Err(_) => {
            cancel.store(true, Ordering::Relaxed);
            Err(SandboxError::Timeout(limits.timeout))
        }
    }
}
