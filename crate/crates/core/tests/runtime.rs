mod common;

use std::sync::Arc;

use common::{document, mock, params, runtime, tester};
use dadl_core::authz::audit::{AuditSink, BrokenSink, Outcome, RecordKind};
use dadl_core::authz::{DecisionKind, Policy, Principal};
use dadl_core::credentials::{CredentialResolver, ResolverConfig};
use dadl_core::model::{effective_tool, fixtures, parse_document, DadlDocument};
use dadl_core::runtime::{InvokeError, Runtime, RuntimeOptions};
use serde_json::{json, Value};

fn rebase(text: &str, base_url: String) -> DadlDocument {
    let mut doc = parse_document(text).unwrap();
    doc.backend.base_url = base_url;
    doc
}

#[tokio::test]
async fn named_status_composite_writes_three_records() {
    let m = mock(
        "auth: {scheme: bearer, token: plug-secret}\nroutes:\n  - {method: GET, path: /api/devices, body: [{id: d1, name: Kitchen}, {id: d2, name: Desk}]}\n  - {method: GET, path: /api/devices/status, body: [{id: d1, relay_on: true, power: 5}, {id: d2, relay_on: false, power: 0}, {id: d3, relay_on: true, power: 1}]}\n",
    )
    .await;
    let doc = rebase(fixtures::SMART_PLUGS, format!("{}/api", m.base_url()));
    let (rt, sink) = runtime(Policy::allow_all(), &[("plugs-token", "plug-secret")], RuntimeOptions::default());
    let out = rt.run_composite(&doc, "get_named_status", &params(json!({})), &tester()).await.unwrap();
    assert_eq!(
        out.value,
        json!([
            {"id": "d1", "relay_on": true, "power": 5, "name": "Kitchen"},
            {"id": "d2", "relay_on": false, "power": 0, "name": "Desk"},
            {"id": "d3", "relay_on": true, "power": 1, "name": "d3"}
        ])
    );
    assert_eq!(out.api_calls, 2);
    let records = sink.records();
    assert_eq!(records.len(), 3);
    let kinds: Vec<_> = records.iter().map(|r| r.kind).collect();
    assert_eq!(kinds, vec![RecordKind::Primitive, RecordKind::Primitive, RecordKind::Composite]);
    for r in &records[..2] {
        assert_eq!(r.parent_context.as_deref(), Some("smart-plugs.get_named_status"));
        assert_eq!(r.credential_ref.as_deref(), Some("vault/plugs-token"));
        assert_eq!(r.decision, DecisionKind::Allow);
    }
    assert_eq!(records[2].tool, "get_named_status");

    let out = rt.run_composite(&doc, "get_named_status", &params(json!({"only_on": true})), &tester()).await.unwrap();
    let names: Vec<_> = out.value.as_array().unwrap().iter().map(|d| d["name"].clone()).collect();
    assert_eq!(names, vec![json!("Kitchen"), json!("d3")]);
}

#[tokio::test]
async fn story_with_comments_joins_and_filters() {
    let m = mock(
        "routes:\n  - method: GET\n    path: '/v0/item/{id}.json'\n    lookup:\n      param: id\n      values:\n        '1': {id: 1, title: story, kids: [2, 3, 4, 5, 6]}\n        '2': {id: 2, text: first}\n        '3': {id: 3, deleted: true}\n        '4': {id: 4, dead: true}\n        '5': {id: 5, text: fifth}\n        '9': {id: 9, title: lonely}\n      missing: null\n",
    )
    .await;
    let doc = rebase(fixtures::HN_STORY, format!("{}/v0", m.base_url()));
    let (rt, sink) = runtime(Policy::allow_all(), &[], RuntimeOptions::default());
    let out = rt
        .run_composite(&doc, "get_story_with_comments", &params(json!({"id": 1, "comment_limit": 4})), &tester())
        .await
        .unwrap();
    assert_eq!(out.value["title"], "story");
    assert_eq!(out.value["comments"], json!([{"id": 2, "text": "first"}, {"id": 5, "text": "fifth"}]));
    assert_eq!(out.api_calls, 5);
    assert_eq!(sink.records().len(), 6);

    let out = rt.run_composite(&doc, "get_story_with_comments", &params(json!({"id": 9})), &tester()).await.unwrap();
    assert_eq!(out.value, json!({"id": 9, "title": "lonely", "comments": []}));

    let e = rt.run_composite(&doc, "get_story_with_comments", &params(json!({})), &tester()).await.unwrap_err();
    assert_eq!(e.kind(), "invalid_params");
}

const WRITE_DOC: &str = "tools:\n  list: {method: GET, path: /things, access: read}\n  wipe: {method: DELETE, path: /things, access: dangerous}\n  odd: {method: GET, path: /things}\ncomposites:\n  tidy:\n    access: read\n    code: |\n      const xs = await api.list();\n      await api.wipe();\n      return xs;\n";

const READER_POLICY: &str = "- {role: tester, allow: [read]}\n";

#[tokio::test]
async fn denied_calls_never_reach_the_wire() {
    let m = mock("routes:\n  - {method: GET, path: /things, body: [1]}\n  - {method: DELETE, path: /things, body: {}}\n").await;
    let doc = document(&m.base_url(), WRITE_DOC);
    let (rt, sink) = runtime(Policy::from_yaml(READER_POLICY).unwrap(), &[], RuntimeOptions::default());
    for tool in ["wipe", "odd"] {
        let t = effective_tool(&doc, tool).unwrap();
        let e = rt.invoke(&t, &params(json!({})), &tester(), None).await.unwrap_err();
        assert!(matches!(e, InvokeError::Denied { .. }), "{e:?}");
    }
    assert!(m.requests_received().is_empty());
    let records = sink.records();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.decision == DecisionKind::Deny && r.outcome == Outcome::Denied && r.attempts == 0));
    assert_eq!(records[1].reason.as_deref(), Some("unlabeled"));
}

#[tokio::test]
async fn composite_inner_denial_and_strict_mode() {
    let m = mock("routes:\n  - {method: GET, path: /things, body: [1]}\n  - {method: DELETE, path: /things, body: {}}\n").await;
    let doc = document(&m.base_url(), WRITE_DOC);

    let (rt, sink) = runtime(Policy::from_yaml(READER_POLICY).unwrap(), &[], RuntimeOptions::default());
    let e = rt.run_composite(&doc, "tidy", &params(json!({})), &tester()).await.unwrap_err();
    assert_eq!(e.kind(), "script_error");
    assert_eq!(m.requests_to("/things"), 1);
    assert!(m.requests_received().iter().all(|r| r.method == "GET"));
    let decisions: Vec<_> = sink.records().iter().map(|r| (r.tool.clone(), r.decision)).collect();
    assert_eq!(
        decisions,
        vec![
            ("list".to_string(), DecisionKind::Allow),
            ("wipe".to_string(), DecisionKind::Deny),
            ("tidy".to_string(), DecisionKind::Allow)
        ]
    );

    m.clear_log();
    let strict = RuntimeOptions { strict_composites: true, ..RuntimeOptions::default() };
    let (rt, sink) = runtime(Policy::from_yaml(READER_POLICY).unwrap(), &[], strict);
    let e = rt.run_composite(&doc, "tidy", &params(json!({})), &tester()).await.unwrap_err();
    assert!(matches!(e, InvokeError::Denied { .. }));
    assert!(m.requests_received().is_empty());
    assert_eq!(sink.records().len(), 1);
}

fn broken_runtime(strict: bool) -> Runtime {
    let resolver = CredentialResolver::new(ResolverConfig::default()).unwrap();
    let sink: Arc<dyn AuditSink> = Arc::new(BrokenSink);
    Runtime::new(Arc::new(resolver), Policy::allow_all(), sink, RuntimeOptions { audit_strict: strict, ..Default::default() })
}

#[tokio::test]
async fn audit_sink_failure_policy() {
    let m = mock("routes:\n  - {method: GET, path: /things, body: [1]}\n").await;
    let doc = document(&m.base_url(), WRITE_DOC);
    let t = effective_tool(&doc, "list").unwrap();
    let lenient = broken_runtime(false);
    assert!(lenient.invoke(&t, &params(json!({})), &tester(), None).await.is_ok());
    assert_eq!(lenient.audit_failures(), 1);
    let strict = broken_runtime(true);
    let e = strict.invoke(&t, &params(json!({})), &tester(), None).await.unwrap_err();
    assert_eq!(e.kind(), "audit_unavailable");
    assert_eq!(strict.audit_failures(), 1);
}

const SENTINEL: &str = "SENTINEL-7f3a9c2e";

#[tokio::test]
async fn sentinel_secret_never_leaks() {
    let m = mock(&format!(
        "auth: {{scheme: bearer, token: {SENTINEL}}}\nroutes:\n  - {{method: GET, path: /ok, body: {{fine: true}}}}\n  - {{method: GET, path: /echo, status: 400, body: {{message: 'rejected token {SENTINEL}'}}}}\n  - {{method: GET, path: /flaky, status: 503, body: {{message: 'retry {SENTINEL}'}}}}\n"
    ))
    .await;
    let doc = document(
        &m.base_url(),
        "auth: {type: bearer, credential: vault/sentinel}\nerror_policy:\n  retry: {max_attempts: 2, base_delay: 10ms}\ntools:\n  ok: {method: GET, path: /ok, access: read}\n  echo: {method: GET, path: /echo, access: read}\n  flaky: {method: GET, path: /flaky, access: read}\n  secret_write: {method: POST, path: /ok, access: admin}\n",
    );
    let policy = Policy::from_yaml("- {role: tester, allow: [read]}\n").unwrap();
    let (rt, sink) = runtime(policy, &[("sentinel", SENTINEL)], RuntimeOptions::default());
    let mut texts = Vec::new();
    for tool in ["ok", "echo", "flaky", "secret_write"] {
        let t = effective_tool(&doc, tool).unwrap();
        match rt.invoke(&t, &params(json!({})), &tester(), None).await {
            Ok(r) => texts.push(serde_json::to_string(&r).unwrap()),
            Err(e) => {
                texts.push(e.to_string());
                texts.push(format!("{e:?}"));
            }
        }
    }
    let unknown_ref = Principal::new("tester", ["tester"]);
    let missing = document(&m.base_url(), "auth: {type: bearer, credential: vault/absent}\ntools:\n  ok: {method: GET, path: /ok, access: read}\n");
    let e = rt.invoke(&effective_tool(&missing, "ok").unwrap(), &params(json!({})), &unknown_ref, None).await.unwrap_err();
    texts.push(format!("{e} {e:?}"));
    assert!(texts.iter().any(|t| t.contains("vault/absent")));
    let records = sink.records();
    assert_eq!(records.len(), 5);
    for r in &records {
        texts.push(r.to_line());
    }
    texts.push(serde_json::to_string(&m.redacted_log()).unwrap());
    for t in &texts {
        assert!(!t.contains(SENTINEL), "leak: {t}");
    }
    assert!(records.iter().any(|r| r.credential_ref.as_deref() == Some("vault/sentinel")));
    let bearer = format!("Bearer {SENTINEL}");
    assert!(m.requests_received().iter().any(|r| r.header("authorization") == Some(bearer.as_str())));
    let ok_value: Value = serde_json::from_str(&texts[0]).unwrap();
    assert_eq!(ok_value["value"], json!({"fine": true}));
}
