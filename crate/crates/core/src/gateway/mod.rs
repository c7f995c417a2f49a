//! Code Mode: the whole catalog behind two tools, `search` and `execute`.

mod catalog;
mod context;
mod interface;
pub mod rpc;
mod search;
pub mod synthetic;

use std::sync::Arc;

use serde::Serialize;
use serde_json::{Map, Value};

pub use catalog::{dadl_files, dir_fingerprint, load_file, watch, Catalog, CatalogEntry, CatalogStore, EntryTarget, LoadError};
pub use context::{
    advertisement_surface, flat_advertisement, input_schema, measure_context, meta_tools, native_name, native_tool, Chars4,
    ContextCostReport, GatewayConfig, Tokenizer, INSTRUCTIONS,
};
pub use interface::{call_path, generate_interface, method_text, params_type, ToolSignature, SIGNATURE_MAX_BYTES};
pub use search::{normalize_term, score, search, terms, DEFAULT_K, MAX_K};

use crate::authz::audit::RecordKind;
use crate::authz::Principal;
use crate::runtime::{api_error, InvokeError, Runtime, ScriptContext};
use crate::sandbox::ApiBinding;
use crate::transform::apply_jq;

/// Backend name recorded for ad-hoc `execute` runs.
pub const SCRIPT_BACKEND: &str = "codemode";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecuteOutput {
    pub result: Value,
    pub api_calls: u32,
    pub logs: Vec<String>,
    pub generation: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum ExecuteError {
    #[error(transparent)]
    Invoke(#[from] InvokeError),
    #[error("jq_override is disabled on this gateway")]
    JqDisabled,
    #[error("jq_override failed: {0}")]
    Jq(String),
}

pub struct Gateway {
    store: Arc<CatalogStore>,
    runtime: Arc<Runtime>,
    config: GatewayConfig,
}

impl Gateway {
    pub fn new(store: Arc<CatalogStore>, runtime: Arc<Runtime>, config: GatewayConfig) -> Self {
        Gateway { store, runtime, config }
    }

    pub fn store(&self) -> &Arc<CatalogStore> {
        &self.store
    }

    pub fn runtime(&self) -> &Arc<Runtime> {
        &self.runtime
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn search(&self, query: &str, k: usize) -> Vec<ToolSignature> {
        search(&self.store.snapshot(), query, k)
    }

    /// Run `script` against the current catalog generation.
    pub async fn execute(&self, script: &str, principal: &Principal, jq_override: Option<&str>) -> Result<ExecuteOutput, ExecuteError> {
        if jq_override.is_some() && !self.config.allow_result_jq {
            return Err(ExecuteError::JqDisabled);
        }
        let catalog = self.store.snapshot();
        let id = self.runtime.next_script_id();
        let binding = catalog.binding(self.runtime.clone(), principal.clone(), id.clone());
        let ctx = ScriptContext { kind: RecordKind::Script, backend: SCRIPT_BACKEND.into(), name: id, access: None };
        let out = self
            .runtime
            .run_audited_script(&ctx, script, binding, Value::Object(Map::new()), self.config.limits, principal)
            .await?;
        let result = match jq_override {
            Some(filter) => apply_jq(&out.value, filter).map_err(|e| ExecuteError::Jq(e.to_string()))?,
            None => out.value,
        };
        Ok(ExecuteOutput { result, api_calls: out.api_calls, logs: out.logs, generation: catalog.generation() })
    }

    /// Call one entry directly, as a natively exposed tool.
    pub async fn call_native(&self, address: &str, params: Value, principal: &Principal) -> Result<Value, crate::sandbox::ApiError> {
        let catalog = self.store.snapshot();
        let entry = catalog.entry(address).ok_or_else(|| {
            crate::sandbox::ApiError::new(crate::sandbox::ApiErrorKind::UnknownTool, format!("unknown tool `{address}`"))
        })?;
        let binding = catalog.binding(self.runtime.clone(), principal.clone(), "native".into());
        binding.call(&entry.qualified, params).await
    }
}

/// Error text for a failed `execute`, as shown to clients.
pub fn describe_error(e: &ExecuteError) -> String {
    match e {
        ExecuteError::Invoke(inner) => format!("{}: {}", inner.kind(), api_error(inner).message),
        other => other.to_string(),
    }
}
