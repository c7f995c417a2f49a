#![allow(dead_code)]

use std::sync::Arc;

use dadl_core::authz::audit::MemorySink;
use dadl_core::authz::{Policy, Principal};
use dadl_core::credentials::{CredentialResolver, ResolverConfig};
use dadl_core::http::ToolResult;
use dadl_core::model::{effective_tool, parse_document, DadlDocument};
use dadl_core::runtime::{InvokeError, Runtime, RuntimeOptions};
use dadl_upstream::{MockUpstream, Scenario};
use serde_json::{Map, Value};

pub struct Harness {
    pub mock: MockUpstream,
    pub doc: DadlDocument,
    pub runtime: Arc<Runtime>,
    pub sink: Arc<MemorySink>,
}

pub async fn mock(scenario: &str) -> MockUpstream {
    MockUpstream::start(Scenario::from_yaml(scenario).expect("scenario")).await.expect("mock starts")
}

/// A document whose `base_url` points at the mock. `body` holds everything after `backend:`.
pub fn document(base_url: &str, body: &str) -> DadlDocument {
    let text = format!("backend:\n  name: t\n  type: rest\n  base_url: {base_url}\n{body}");
    parse_document(&text).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

pub fn runtime(policy: Policy, secrets: &[(&str, &str)], options: RuntimeOptions) -> (Arc<Runtime>, Arc<MemorySink>) {
    let resolver = CredentialResolver::new(ResolverConfig::default().with_static("vault", secrets)).unwrap();
    let sink = Arc::new(MemorySink::new());
    let rt = Runtime::new(Arc::new(resolver), policy, sink.clone(), options);
    (Arc::new(rt), sink)
}

pub async fn harness(scenario: &str, doc_body: &str, secrets: &[(&str, &str)]) -> Harness {
    let mock = mock(scenario).await;
    let doc = document(&mock.base_url(), doc_body);
    let (runtime, sink) = runtime(Policy::allow_all(), secrets, RuntimeOptions::default());
    Harness { mock, doc, runtime, sink }
}

pub fn params(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        Value::Null => Map::new(),
        other => panic!("params must be an object, got {other}"),
    }
}

pub fn tester() -> Principal {
    Principal::new("tester", ["tester"])
}

impl Harness {
    pub async fn call(&self, tool: &str, p: Value) -> Result<ToolResult, InvokeError> {
        let t = effective_tool(&self.doc, tool).expect("tool exists");
        self.runtime.invoke(&t, &params(p), &tester(), None).await
    }
}
