//! The only path to an upstream request: authorize, execute, audit.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use chrono::Utc;
use futures::future::BoxFuture;
use futures::FutureExt;
use serde_json::{json, Map, Value};

use crate::authz::audit::{AuditRecord, AuditSink, Outcome, RecordKind, SinkUnavailable};
use crate::authz::{authorize, DecisionKind, Policy, Principal};
use crate::credentials::CredentialResolver;
use crate::http::auth::primary_credential;
use crate::http::request::{normalize_against, RequestError};
use crate::http::{EngineError, ExecStats, HttpEngine, CallOrigin, ToolResult};
use crate::model::{
    composite_references, effective_tool, AccessLabel, DadlDocument, ParamDef, ParamLocation, ResolvedParam,
    ResolvedTool,
};
use crate::sandbox::{run_script, ApiBinding, ApiError, ApiErrorKind, ApiName, SandboxError, SandboxLimits, ScriptOutcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RuntimeOptions {
    /// Fail invocations whose audit record cannot be written.
    pub audit_strict: bool,
    /// Deny a composite up front if the caller lacks any label it can reach.
    pub strict_composites: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InvokeError {
    #[error("access denied for `{tool}`: {reason}")]
    Denied { tool: String, reason: String },
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error(transparent)]
    InvalidParams(#[from] RequestError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Script(#[from] SandboxError),
    #[error(transparent)]
    Audit(#[from] SinkUnavailable),
}

impl InvokeError {
    pub fn kind(&self) -> &'static str {
        match self {
            InvokeError::Denied { .. } => "denied",
            InvokeError::UnknownTool(_) => "unknown_tool",
            InvokeError::InvalidParams(_) => "invalid_params",
            InvokeError::Engine(e) => e.kind(),
            InvokeError::Script(e) => e.kind(),
            InvokeError::Audit(_) => "audit_unavailable",
        }
    }
}

pub struct Runtime {
    engine: HttpEngine,
    policy: Policy,
    sink: Arc<dyn AuditSink>,
    options: RuntimeOptions,
    audit_failures: AtomicU64,
    script_seq: AtomicU64,
}

/// Context of a script run, used to label the records of its primitive calls.
#[derive(Debug, Clone)]
pub struct ScriptContext {
    pub kind: RecordKind,
    pub backend: String,
    pub name: String,
    pub access: Option<AccessLabel>,
}

impl Runtime {
    pub fn new(resolver: Arc<CredentialResolver>, policy: Policy, sink: Arc<dyn AuditSink>, options: RuntimeOptions) -> Self {
        Runtime {
            engine: HttpEngine::new(resolver),
            policy,
            sink,
            options,
            audit_failures: AtomicU64::new(0),
            script_seq: AtomicU64::new(0),
        }
    }

    pub fn engine(&self) -> &HttpEngine {
        &self.engine
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn options(&self) -> RuntimeOptions {
        self.options
    }

    /// Records that could not be written since startup.
    pub fn audit_failures(&self) -> u64 {
        self.audit_failures.load(Ordering::Relaxed)
    }

    /// Fresh identifier for an ad-hoc script run.
    pub fn next_script_id(&self) -> String {
        format!("script-{}", self.script_seq.fetch_add(1, Ordering::Relaxed) + 1)
    }

    fn emit(&self, rec: &AuditRecord) -> Result<(), SinkUnavailable> {
        match self.sink.record(rec) {
            Ok(()) => Ok(()),
            Err(e) => {
                self.audit_failures.fetch_add(1, Ordering::Relaxed);
                tracing::warn!(error = %e, tool = %rec.tool, "audit record dropped");
                if self.options.audit_strict {
                    Err(e)
                } else {
                    Ok(())
                }
            }
        }
    }

    fn base_record(&self, kind: RecordKind, principal: &Principal, backend: &str, tool: &str, access: Option<&AccessLabel>) -> AuditRecord {
        AuditRecord {
            timestamp: Utc::now(),
            kind,
            principal: principal.id.clone(),
            backend: backend.to_string(),
            tool: tool.to_string(),
            access: access.map_or("unlabeled", AccessLabel::as_str).to_string(),
            decision: DecisionKind::Allow,
            reason: None,
            parent_context: None,
            credential_ref: None,
            upstream_status: None,
            attempts: 0,
            pages: 0,
            request_bytes: 0,
            response_bytes: 0,
            outcome: Outcome::Ok,
            error: None,
            duration_ms: 0,
        }
    }

    /// Authorize, execute and audit one primitive call.
    pub async fn invoke(
        &self,
        tool: &ResolvedTool,
        params: &Map<String, Value>,
        principal: &Principal,
        parent: Option<&str>,
    ) -> Result<ToolResult, InvokeError> {
        let started = Instant::now();
        let mut rec = self.base_record(RecordKind::Primitive, principal, &tool.backend_name, &tool.tool_name, tool.access.as_ref());
        rec.parent_context = parent.map(str::to_string);
        rec.credential_ref = tool.auth.as_ref().map(|a| primary_credential(a).to_string());
        let decision = authorize(principal, tool.access.as_ref(), &self.policy.rules);
        if !decision.allowed() {
            rec.decision = DecisionKind::Deny;
            rec.outcome = Outcome::Denied;
            rec.reason = Some(decision.reason.clone());
            self.emit(&rec)?;
            return Err(InvokeError::Denied { tool: tool.tool_name.clone(), reason: decision.reason });
        }
        let mut stats = ExecStats::default();
        let origin = CallOrigin { principal: principal.id.clone() };
        let result = self.engine.execute_tool(tool, params, &origin, &mut stats).await;
        rec.upstream_status = stats.upstream_status;
        rec.attempts = stats.attempts;
        rec.pages = stats.pages;
        rec.request_bytes = stats.request_bytes;
        rec.response_bytes = stats.response_bytes;
        rec.duration_ms = started.elapsed().as_millis() as u64;
        if let Err(e) = &result {
            rec.outcome = Outcome::Error;
            rec.error = Some(e.kind().to_string());
        }
        self.emit(&rec)?;
        Ok(result?)
    }

    /// Run a composite tool of `doc` with every inner call authorized and audited.
    pub async fn run_composite(
        self: &Arc<Self>,
        doc: &DadlDocument,
        name: &str,
        params: &Map<String, Value>,
        principal: &Principal,
    ) -> Result<ScriptOutcome, InvokeError> {
        let def = doc.composites.get(name).ok_or_else(|| InvokeError::UnknownTool(name.to_string()))?;
        let ctx = ScriptContext {
            kind: RecordKind::Composite,
            backend: doc.backend.name.clone(),
            name: name.to_string(),
            access: def.access.clone(),
        };
        if self.options.strict_composites {
            for tool in composite_references(&def.code).iter().filter_map(|t| doc.tools.get(t)) {
                let d = authorize(principal, tool.access.as_ref(), &self.policy.rules);
                if !d.allowed() {
                    let mut rec = self.base_record(ctx.kind, principal, &ctx.backend, name, ctx.access.as_ref());
                    rec.decision = DecisionKind::Deny;
                    rec.outcome = Outcome::Denied;
                    rec.reason = Some(format!("strict composite: {}", d.reason));
                    self.emit(&rec)?;
                    return Err(InvokeError::Denied { tool: name.to_string(), reason: d.reason });
                }
            }
        }
        let defs = composite_param_defs(&def.params);
        let params = normalize_against(&defs, params)?;
        let limits = SandboxLimits {
            timeout: def.timeout,
            max_api_calls: def.max_api_calls.get(),
            ..SandboxLimits::default()
        };
        let parent = format!("{}.{}", doc.backend.name, name);
        let binding = ToolBinding::for_document(self.clone(), doc, principal.clone(), parent);
        self.run_audited_script(&ctx, &def.code, binding, Value::Object(params), limits, principal).await
    }

    /// Run a script and write one record for the script itself.
    pub async fn run_audited_script(
        &self,
        ctx: &ScriptContext,
        code: &str,
        binding: ToolBinding,
        params: Value,
        limits: SandboxLimits,
        principal: &Principal,
    ) -> Result<ScriptOutcome, InvokeError> {
        let started = Instant::now();
        let parent = binding.parent.clone();
        let result = run_script(code, Arc::new(binding), params, limits).await;
        let mut rec = self.base_record(ctx.kind, principal, &ctx.backend, &ctx.name, ctx.access.as_ref());
        if ctx.kind == RecordKind::Script {
            rec.parent_context = Some(parent);
        }
        rec.duration_ms = started.elapsed().as_millis() as u64;
        match &result {
            Ok(out) => rec.attempts = out.api_calls,
            Err(e) => {
                rec.outcome = Outcome::Error;
                rec.error = Some(e.kind().to_string());
            }
        }
        self.emit(&rec)?;
        Ok(result?)
    }
}

/// Composite params travel in a JSON map, so every one is a body param.
pub fn composite_param_defs(params: &std::collections::BTreeMap<String, ParamDef>) -> std::collections::BTreeMap<String, ResolvedParam> {
    params
        .iter()
        .map(|(k, d)| {
            let p = ResolvedParam {
                kind: d.kind.clone(),
                required: d.required,
                default: d.default.clone(),
                location: ParamLocation::Body,
                description: d.description.clone(),
                allowed: d.allowed.clone(),
            };
            (k.clone(), p)
        })
        .collect()
}

/// A composite callable from a script.
#[derive(Debug, Clone)]
pub struct CompositeTarget {
    pub document: Arc<DadlDocument>,
    pub name: String,
}

/// The `api` object of one script run.
#[derive(Clone)]
pub struct ToolBinding {
    runtime: Arc<Runtime>,
    tools: Arc<HashMap<String, Arc<ResolvedTool>>>,
    composites: Arc<HashMap<String, CompositeTarget>>,
    namespaces: Arc<BTreeSet<String>>,
    principal: Principal,
    parent: String,
}

impl ToolBinding {
    /// `tools` maps every callable name (bare and/or `backend.tool`) to its tool.
    pub fn new(
        runtime: Arc<Runtime>,
        tools: Arc<HashMap<String, Arc<ResolvedTool>>>,
        namespaces: Arc<BTreeSet<String>>,
        principal: Principal,
        parent: String,
    ) -> Self {
        ToolBinding { runtime, tools, composites: Arc::default(), namespaces, principal, parent }
    }

    /// Also expose `composites` under the given names.
    pub fn with_composites(mut self, composites: Arc<HashMap<String, CompositeTarget>>) -> Self {
        self.composites = composites;
        self
    }

    /// Binding over the primitive tools of one document.
    pub fn for_document(runtime: Arc<Runtime>, doc: &DadlDocument, principal: Principal, parent: String) -> Self {
        let mut tools = HashMap::new();
        for name in doc.tools.keys() {
            let t = Arc::new(effective_tool(doc, name).expect("tool listed in its own document"));
            tools.insert(format!("{}.{}", doc.backend.name, name), t.clone());
            tools.insert(name.clone(), t);
        }
        let namespaces = [doc.backend.name.clone()].into_iter().collect();
        Self::new(runtime, Arc::new(tools), Arc::new(namespaces), principal, parent)
    }

    pub fn parent(&self) -> &str {
        &self.parent
    }
}

/// Script-facing value of a tool result. Expose-mode tools also carry their cursor.
pub fn script_value(tool: &ResolvedTool, result: ToolResult) -> Value {
    if tool.expose_paginated() {
        json!({ "items": result.value, "next_cursor": result.next_cursor })
    } else {
        result.value
    }
}

pub fn api_error(e: &InvokeError) -> ApiError {
    let kind = match e {
        InvokeError::Denied { .. } => ApiErrorKind::Denied,
        InvokeError::UnknownTool(_) => ApiErrorKind::UnknownTool,
        InvokeError::InvalidParams(_) => ApiErrorKind::InvalidParams,
        InvokeError::Engine(EngineError::InvalidParams(_) | EngineError::Transform(crate::transform::TransformError::OverrideForbidden)) => {
            ApiErrorKind::InvalidParams
        }
        InvokeError::Engine(EngineError::RetriesExhausted { status: Some(429), .. }) => ApiErrorKind::RateLimited,
        InvokeError::Engine(EngineError::Timeout(_)) => ApiErrorKind::Timeout,
        InvokeError::Engine(_) => ApiErrorKind::Upstream,
        InvokeError::Script(_) | InvokeError::Audit(_) => ApiErrorKind::Internal,
    };
    ApiError {
        kind,
        message: e.to_string(),
        status: match e {
            InvokeError::Engine(en) => en.status(),
            _ => None,
        },
    }
}

impl ApiBinding for ToolBinding {
    fn resolve(&self, name: &str) -> ApiName {
        if self.tools.contains_key(name) || self.composites.contains_key(name) {
            ApiName::Tool(name.to_string())
        } else if self.namespaces.contains(name) {
            ApiName::Namespace
        } else {
            ApiName::Unknown
        }
    }

    fn call(&self, tool: &str, params: Value) -> BoxFuture<'static, Result<Value, ApiError>> {
        let this = self.clone();
        let name = tool.to_string();
        async move {
            let params = match params {
                Value::Object(m) => m,
                Value::Null => Map::new(),
                _ => return Err(ApiError::new(ApiErrorKind::InvalidParams, "tool params must be an object")),
            };
            if let Some(target) = this.composites.get(&name) {
                return match this.runtime.run_composite(&target.document, &target.name, &params, &this.principal).await {
                    Ok(out) => Ok(out.value),
                    Err(e) => Err(api_error(&e)),
                };
            }
            let tool = this
                .tools
                .get(&name)
                .cloned()
                .ok_or_else(|| ApiError::new(ApiErrorKind::UnknownTool, format!("unknown tool `{name}`")))?;
            match this.runtime.invoke(&tool, &params, &this.principal, Some(&this.parent)).await {
                Ok(r) => Ok(script_value(&tool, r)),
                Err(e) => Err(api_error(&e)),
            }
        }
        .boxed()
    }
}
