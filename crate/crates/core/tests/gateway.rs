mod common;

use std::path::Path;
use std::sync::Arc;

use common::mock;
use dadl_core::authz::audit::RecordKind;
use dadl_core::authz::{DecisionKind, Policy, Principal};
use dadl_core::gateway::rpc::{serve_stdio, Session, PARSE_ERROR};
use dadl_core::gateway::synthetic::{synthetic_catalog, SyntheticProfile};
use dadl_core::gateway::*;
use dadl_core::model::fixtures;
use dadl_core::runtime::RuntimeOptions;
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};

fn github_doc(base_url: &str) -> String {
    format!(
        "backend: {{name: github, type: rest, base_url: '{base_url}'}}
auth: {{type: bearer, credential: vault/gh-token}}
hints:
  list_repository_issues: {{labels: comma separated label names like flamingo}}
tools:
  list_repository_issues:
    method: GET
    path: /repos/{{owner}}/{{repo}}/issues
    access: read
    description: List issues in a repository
    params:
      owner: {{type: string, required: true, location: path}}
      repo: {{type: string, required: true, location: path}}
      state: {{type: string, enum: [open, closed, all], default: open}}
      labels: {{type: string}}
  delete_repository:
    method: DELETE
    path: /repos/{{owner}}/{{repo}}
    access: dangerous
    description: Delete a repository
    params:
      owner: {{type: string, required: true, location: path}}
      repo: {{type: string, required: true, location: path}}
"
    )
}

const ISSUES: &str = "routes:
  - method: GET
    path: '/repos/{owner}/{repo}/issues'
    body:
      - {number: 11, title: Flaky test, html_url: 'https://gh.test/11', assignee: {login: ann}}
      - {number: 12, title: Crash on start, html_url: 'https://gh.test/12', assignee: null}
      - {number: 13, title: Slow search, html_url: 'https://gh.test/13', assignee: {login: bo}}
  - {method: DELETE, path: '/repos/{owner}/{repo}', body: {}}
";

const SNIPPET: &str = r#"const issues = await api.list_repository_issues({
  owner: "Dunke1Cloud",
  repo: "ToolMesh",
  state: "open",
  labels: "bug",
});
return issues.filter(i => !i.assignee).map(i => ({
  number: i.number, title: i.title, url: i.html_url,
}));"#;

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn gateway_over(dir: &Path, policy: Policy) -> (Arc<Gateway>, Arc<dadl_core::authz::audit::MemorySink>) {
    let store = Arc::new(CatalogStore::from_dir(dir).unwrap());
    let (rt, sink) = common::runtime(policy, &[("gh-token", "gh-secret"), ("my-api-token", "t")], RuntimeOptions::default());
    (Arc::new(Gateway::new(store, rt, GatewayConfig::default())), sink)
}

#[test]
fn my_api_interface() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "my-api.dadl", fixtures::MY_API);
    let catalog = Catalog::load_dir(dir.path(), 1).unwrap();
    let text = generate_interface(&catalog);
    assert!(text.contains("list_items(params: {}): Promise<unknown>;"), "{text}");
    assert!(text.contains(" * List all items\n"));
    assert!(text.contains(" * @access read\n"));
    assert_eq!(text.matches("(params:").count(), 1);
}

#[test]
fn surface_is_constant_across_catalog_sizes() {
    let config = GatewayConfig::default();
    let surface = advertisement_surface(&config);
    let empty = measure_context(&Catalog::empty(), &Chars4, &config);
    assert_eq!(empty.flat_advertisement_tokens, 0);
    assert_eq!(empty.reduction_ratio, 0.0);
    let mut last_ratio = 0.0;
    for n in [1, 92, 500, 1833] {
        let catalog = synthetic_catalog(&SyntheticProfile::registry_like(n));
        assert_eq!(catalog.len(), n);
        assert_eq!(advertisement_surface(&config), surface);
        let report = measure_context(&catalog, &Chars4, &config);
        assert_eq!(report.codemode_surface_tokens, empty.codemode_surface_tokens);
        assert!(report.reduction_ratio >= last_ratio, "ratio fell at {n}");
        last_ratio = report.reduction_ratio;
    }
    let tokens = empty.codemode_surface_tokens as f64;
    assert!((700.0..=1300.0).contains(&tokens), "{tokens}");
}

#[test]
fn calibrated_catalog_matches_published_scale() {
    let config = GatewayConfig::default();
    let full = measure_context(&synthetic_catalog(&SyntheticProfile::registry_like(1833)), &Chars4, &config);
    assert!((100.0..=200.0).contains(&full.reduction_ratio), "{full:?}");
    let flat = full.flat_advertisement_tokens as f64;
    assert!((142_000.0 * 0.7..=142_000.0 * 1.3).contains(&flat), "{full:?}");
    let kb = full.interface_bytes_total as f64;
    assert!((634_000.0 * 0.8..=634_000.0 * 1.2).contains(&kb), "{full:?}");
    let median = measure_context(&synthetic_catalog(&SyntheticProfile::registry_like(92)), &Chars4, &config);
    assert!((4.0..=8.0).contains(&median.reduction_ratio), "{median:?}");
}

#[test]
fn plugin_tokenizer() {
    let words = |t: &str| t.split_whitespace().count() as u64;
    let catalog = synthetic_catalog(&SyntheticProfile::registry_like(10));
    let report = measure_context(&catalog, &words, &GatewayConfig::default());
    assert_eq!(report.codemode_surface_tokens, words(&advertisement_surface(&GatewayConfig::default())));
}

#[test]
fn signatures_bounded_and_consistent_with_interface() {
    let catalog = synthetic_catalog(&SyntheticProfile::registry_like(1833));
    let text = generate_interface(&catalog);
    assert_eq!(text.matches("(params:").count(), catalog.len());
    for e in catalog.entries() {
        let sig = ToolSignature::of(e);
        assert!(sig.render().len() <= SIGNATURE_MAX_BYTES);
        assert!(sig.description.chars().count() <= 200);
        let same_name = catalog.entries().iter().filter(|o| o.interface == e.interface).count();
        assert!(text.matches(e.interface.lines().last().unwrap()).count() >= same_name);
    }
}

#[test]
fn search_ranks_by_weighted_overlap() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "github.dadl", &github_doc("https://api.github.test"));
    write(dir.path(), "my-api.dadl", fixtures::MY_API);
    write(dir.path(), "plugs.dadl", fixtures::SMART_PLUGS);
    let catalog = Catalog::load_dir(dir.path(), 1).unwrap();
    let hits = search(&catalog, "list repositories", 10);
    let names: Vec<_> = hits.iter().map(|h| h.name.as_str()).collect();
    // list_repository_issues: list(3+1) + repository(3+1) = 8; the rest score 4 and tie-break on qualified name.
    assert_eq!(names[0], "list_repository_issues");
    assert_eq!(names[1..], ["delete_repository", "list_items", "list_devices"]);
    assert!(search(&catalog, "zebra quantum", 10).is_empty());
    let hinted = search(&catalog, "flamingo", 10);
    assert_eq!(hinted.len(), 1);
    assert_eq!(hinted[0].name, "list_repository_issues");
    assert!(hinted[0].interface.contains("list_repository_issues(params: { labels?: string; owner: string"));
    assert_eq!(search(&catalog, "list", 2).len(), 2);
}

#[test]
fn ambiguous_names_are_qualified() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.dadl", fixtures::MY_API);
    write(dir.path(), "b.dadl", &fixtures::MY_API.replace("name: my-api", "name: other-api"));
    let catalog = Catalog::load_dir(dir.path(), 1).unwrap();
    let addresses: Vec<_> = catalog.entries().iter().map(|e| e.address.as_str()).collect();
    assert_eq!(addresses, ["my-api.list_items", "other-api.list_items"]);
    assert!(generate_interface(&catalog).contains("  \"my-api\": {\n"));
    assert_eq!(call_path("my-api.list_items"), "api[\"my-api\"].list_items");
}

#[tokio::test]
async fn execute_reproduces_the_issue_snippet() {
    let m = mock(ISSUES).await;
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "github.dadl", &github_doc(&m.base_url()));
    let (gw, sink) = gateway_over(dir.path(), Policy::allow_all());
    let out = gw.execute(SNIPPET, &Principal::new("dev", ["dev"]), None).await.unwrap();
    assert_eq!(out.result, json!([{"number": 12, "title": "Crash on start", "url": "https://gh.test/12"}]));
    assert_eq!(out.api_calls, 1);
    let req = &m.requests_received()[0];
    assert_eq!(req.path, "/repos/Dunke1Cloud/ToolMesh/issues");
    assert_eq!(req.query_value("labels"), Some("bug"));
    let records = sink.records();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].kind, RecordKind::Primitive);
    assert_eq!(records[0].parent_context.as_deref(), Some(records[1].tool.as_str()));
    assert_eq!(records[1].kind, RecordKind::Script);

    let trivial = gw.execute("return 1+1", &Principal::new("dev", ["dev"]), None).await.unwrap();
    assert_eq!(trivial.result, json!(2));
    assert_eq!(trivial.api_calls, 0);
    assert_eq!(sink.records().iter().filter(|r| r.kind == RecordKind::Primitive).count(), 1);

    let projected = gw.execute(SNIPPET, &Principal::new("dev", ["dev"]), Some("map(.number)")).await.unwrap();
    assert_eq!(projected.result, json!([12]));
}

#[tokio::test]
async fn denied_call_is_catchable_inside_execute() {
    let m = mock(ISSUES).await;
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "github.dadl", &github_doc(&m.base_url()));
    let (gw, sink) = gateway_over(dir.path(), Policy::from_yaml("- {role: reader, allow: [read]}\n").unwrap());
    let script = r#"try {
  await api.delete_repository({ owner: "o", repo: "r" });
  return "deleted";
} catch (e) {
  return "refused: " + e.message;
}"#;
    let out = gw.execute(script, &Principal::new("rita", ["reader"]), None).await.unwrap();
    let text = out.result.as_str().unwrap();
    assert!(text.starts_with("refused: ") && text.contains("dangerous"), "{text}");
    assert!(m.requests_received().is_empty());
    assert_eq!(sink.records()[0].decision, DecisionKind::Deny);
}

#[tokio::test]
async fn hot_reload_is_atomic() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "my-api.dadl", fixtures::MY_API);
    let store = CatalogStore::from_dir(dir.path()).unwrap();
    assert_eq!(store.snapshot().generation(), 1);
    assert!(search(&store.snapshot(), "widgets", 10).is_empty());

    let added = fixtures::MY_API.replace(
        "tools:\n",
        "tools:\n  list_widgets:\n    method: GET\n    path: /widgets\n    access: read\n    description: \"List widgets\"\n",
    );
    write(dir.path(), "my-api.dadl", &added);
    assert_eq!(store.reload().unwrap(), 2);
    assert_eq!(search(&store.snapshot(), "widgets", 10)[0].name, "list_widgets");

    for i in 0..3 {
        write(dir.path(), &format!("ok{i}.dadl"), &fixtures::MY_API.replace("name: my-api", &format!("name: api{i}")));
    }
    write(dir.path(), "broken.dadl", "backend: {name: broken, type: rest, base_url: 'https://b.test'}\ntools: []\n");
    let errors = store.reload().unwrap_err();
    assert_eq!(errors.len(), 1);
    assert!(errors[0].source_name.ends_with("broken.dadl"));
    assert_eq!(store.snapshot().generation(), 2);
    assert_eq!(store.snapshot().len(), 2);
}

#[tokio::test]
async fn in_flight_script_survives_backend_removal() {
    let m = mock(
        "routes:\n  - {method: GET, path: /api/devices, body: [{id: d1, name: Kitchen}], delay_ms: 400}\n  - {method: GET, path: /api/devices/status, body: [{id: d1, relay_on: true}]}\n",
    )
    .await;
    let dir = tempfile::tempdir().unwrap();
    let doc = fixtures::SMART_PLUGS.replace("https://plugs.example.com/api", &format!("{}/api", m.base_url()));
    write(dir.path(), "plugs.dadl", &doc);
    write(dir.path(), "my-api.dadl", fixtures::MY_API);
    let store = Arc::new(CatalogStore::from_dir(dir.path()).unwrap());
    let (rt, _sink) = common::runtime(Policy::allow_all(), &[("plugs-token", "p")], RuntimeOptions::default());
    let gw = Arc::new(Gateway::new(store.clone(), rt, GatewayConfig::default()));
    let running = {
        let gw = gw.clone();
        tokio::spawn(async move {
            gw.execute("const d = await api.list_devices(); const s = await api.get_all_device_status(); return [d.length, s.length];", &Principal::new("p", ["x"]), None)
                .await
        })
    };
    tokio::time::sleep(std::time::Duration::from_millis(150)).await;
    std::fs::remove_file(dir.path().join("plugs.dadl")).unwrap();
    assert_eq!(store.reload().unwrap(), 2);
    let out = running.await.unwrap().unwrap();
    assert_eq!(out.result, json!([1, 1]));
    assert_eq!(out.generation, 1);
    let after = gw.execute("return await api.list_devices();", &Principal::new("p", ["x"]), None).await;
    let msg = describe_error(&after.unwrap_err());
    assert!(msg.contains("list_devices"), "{msg}");
}

#[tokio::test]
async fn json_rpc_over_stdio() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "my-api.dadl", fixtures::MY_API);
    let (gw, _) = gateway_over(dir.path(), Policy::allow_all());
    let (client, server) = tokio::io::duplex(1 << 16);
    let (server_read, server_write) = tokio::io::split(server);
    let task = tokio::spawn(serve_stdio(gw, BufReader::new(server_read), server_write, Principal::new("anonymous", Vec::<String>::new())));
    let (client_read, mut client_write) = tokio::io::split(client);
    let input = [
        r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{"principal":"alice"}}"#,
        r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#,
        r#"{"jsonrpc":"2.0","id":2,"method":"tools/list"}"#,
        r#"{"jsonrpc":"2.0","id":3,"method":"tools/call","params":{"name":"search","arguments":{"query":"items"}}}"#,
        r#"{not json"#,
        r#"{"jsonrpc":"2.0","id":4,"method":"nope"}"#,
    ];
    for line in input {
        client_write.write_all(format!("{line}\n").as_bytes()).await.unwrap();
    }
    client_write.shutdown().await.unwrap();
    let mut lines = BufReader::new(client_read).lines();
    let mut replies = Vec::new();
    while let Some(l) = lines.next_line().await.unwrap() {
        replies.push(serde_json::from_str::<Value>(&l).unwrap());
    }
    task.await.unwrap().unwrap();
    assert_eq!(replies.len(), 5);
    let by_id = |id: i64| replies.iter().find(|r| r["id"] == json!(id)).unwrap().clone();
    assert_eq!(by_id(2)["result"]["tools"].as_array().unwrap().len(), 2);
    let found = &by_id(3)["result"]["structuredContent"]["results"];
    assert_eq!(found.as_array().unwrap().len(), 1);
    assert_eq!(found[0]["name"], "list_items");
    assert_eq!(by_id(4)["error"]["code"], -32601);
    let parse = replies.iter().find(|r| r["id"].is_null()).unwrap();
    assert_eq!(parse["error"]["code"], PARSE_ERROR);
}

#[tokio::test]
async fn handshake_principal_and_native_exposure() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "my-api.dadl", fixtures::MY_API);
    let store = Arc::new(CatalogStore::from_dir(dir.path()).unwrap());
    let policy = Policy::from_yaml("rules:\n  - {role: staff, allow: [read]}\nprincipals:\n  alice: {roles: [staff]}\n").unwrap();
    let (rt, _) = common::runtime(policy, &[], RuntimeOptions::default());
    let config = GatewayConfig { expose_native: true, ..GatewayConfig::default() };
    let gw = Gateway::new(store, rt, config);
    let mut session = Session { principal: Principal::new("anonymous", Vec::<String>::new()), handshake_principal: true };
    gw.handle_text(&mut session, r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{"principal":"alice"}}"#).await;
    assert_eq!(session.principal, Principal::new("alice", ["staff"]));
    let list = gw.handle_text(&mut session, r#"{"jsonrpc":"2.0","id":2,"method":"tools/list"}"#).await.unwrap();
    let names: Vec<_> = list["result"]["tools"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap().to_string()).collect();
    assert_eq!(names, ["search", "execute", "list_items"]);
    let mut http = Session { principal: Principal::new("anonymous", Vec::<String>::new()), handshake_principal: false };
    let r = gw.handle_text(&mut http, r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{"principal":"alice"}}"#).await.unwrap();
    assert_eq!(r["error"]["code"], -32602);
}
