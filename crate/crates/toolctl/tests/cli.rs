use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use dadl_upstream::{MockUpstream, Scenario};
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::process::{Child, ChildStdout};

const BIN: &str = env!("CARGO_BIN_EXE_toolctl");

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn toolctl(cwd: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).env_remove("RUST_LOG").output().expect("spawn toolctl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_golden(output: &Output, name: &str) {
    assert_eq!(output.status.code(), Some(0), "{}", stderr(output));
    let got: Value = serde_json::from_slice(&output.stdout).unwrap();
    let want: Value = serde_json::from_str(&std::fs::read_to_string(golden().join(name)).unwrap()).unwrap();
    assert_eq!(got, want, "{name}");
}

fn secrets_file(dir: &Path, entries: &[(&str, &str)]) -> PathBuf {
    let path = dir.join("secrets.yaml");
    let text: String = entries.iter().map(|(k, v)| format!("{k}: \"{v}\"\n")).collect();
    std::fs::write(&path, text).unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o600)).unwrap();
    }
    path
}

#[test]
fn validate_reports_per_file() {
    let out = toolctl(&fixtures(), &["validate", "my_api.dadl"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "OK my_api.dadl\n");

    let dir = tempfile::tempdir().unwrap();
    let bad = std::fs::read_to_string(fixtures().join("my_api.dadl")).unwrap().replace("vault/my-api-token", "\"sk_live_abc123\"");
    std::fs::write(dir.path().join("bad.dadl"), bad).unwrap();
    let out = toolctl(dir.path(), &["validate", "bad.dadl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL bad.dadl\n  error at `auth.credential`"), "{}", stdout(&out));
    assert!(!stdout(&out).contains("sk_live_abc123"));

    let out = toolctl(&fixtures(), &["validate", "."]);
    assert_eq!(stdout(&out).lines().filter(|l| l.starts_with("OK ")).count(), 3);
    assert_golden(&toolctl(&fixtures(), &["--json", "validate", "my_api.dadl", "smart_plugs.dadl", "hn_story.dadl"]), "validate_examples.json");

    let out = toolctl(dir.path(), &["validate", "missing.dadl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("[io_error]"));
}

#[test]
fn strict_turns_warnings_into_failures() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("my_api.dadl")).unwrap().replace("    access: read\n", "");
    std::fs::write(dir.path().join("unlabeled.dadl"), text).unwrap();
    let lenient = toolctl(dir.path(), &["validate", "unlabeled.dadl"]);
    assert_eq!(lenient.status.code(), Some(0), "{}", stdout(&lenient));
    assert!(stdout(&lenient).contains("warning at `tools.list_items"));
    let strict = toolctl(dir.path(), &["validate", "--strict", "unlabeled.dadl"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn closure_and_coverage_reports() {
    let out = toolctl(&fixtures(), &["closure", "my_api.dadl"]);
    assert!(stdout(&out).contains("  GET /items  list_items [read]\n"));
    let out = toolctl(&fixtures(), &["closure", "smart_plugs.dadl"]);
    let text = stdout(&out);
    assert!(text.contains("CONTAINS CODE"));
    assert!(text.contains("composite get_named_status [read] -> get_all_device_status, list_devices"));
    assert_golden(&toolctl(&fixtures(), &["--json", "closure", "smart_plugs.dadl"]), "closure_smart_plugs.json");

    let out = toolctl(&golden(), &["closure", "--access", "dangerous", "github.dadl"]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().filter(|l| l.starts_with("  ")).collect();
    assert_eq!(lines, ["  DELETE /repos/{owner}/{repo}  delete_repository [dangerous]"]);
    assert_golden(&toolctl(&golden(), &["--json", "closure", "--access", "dangerous", "github.dadl"]), "closure_github_dangerous.json");
    assert_golden(&toolctl(&golden(), &["--json", "coverage", "github.dadl"]), "coverage_github.json");
}

#[test]
fn measure_synthetic_catalogs() {
    let ratio = |n: &str| {
        let out = toolctl(&fixtures(), &["--json", "measure", "--synthetic", n]);
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        v["reduction_ratio"].as_f64().unwrap()
    };
    let big = ratio("1833");
    assert!((100.0..=200.0).contains(&big), "{big}");
    let median = ratio("92");
    assert!((5.9 - 2.0..=5.9 + 2.0).contains(&median), "{median}");
    assert_eq!(ratio("0"), 0.0);
    let out = toolctl(&fixtures(), &["measure", "--library-dir", "."]);
    assert!(stdout(&out).starts_with("tools:                6\n"), "{}", stdout(&out));
}

#[test]
fn schema_and_usage_errors() {
    let out = toolctl(&fixtures(), &["schema"]);
    let schema: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(schema["type"], "object");
    assert_eq!(toolctl(&fixtures(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(toolctl(&fixtures(), &["measure"]).status.code(), Some(2));
}

async fn issues_mock() -> MockUpstream {
    let scenario = Scenario::from_yaml(
        "routes:
  - method: GET
    path: '/repos/{owner}/{repo}/issues'
    auth: {scheme: bearer, token: gh-secret-7731}
    body: [{number: 1, title: First}, {number: 2, title: Second}]
  - {method: DELETE, path: '/repos/{owner}/{repo}', body: {}}
",
    )
    .unwrap();
    MockUpstream::start(scenario).await.unwrap()
}

fn library(dir: &Path, base_url: &str) -> PathBuf {
    let lib = dir.join("library");
    std::fs::create_dir_all(&lib).unwrap();
    let doc = std::fs::read_to_string(golden().join("github.dadl")).unwrap().replace("https://api.github.test", base_url);
    std::fs::write(lib.join("github.dadl"), doc).unwrap();
    lib
}

#[tokio::test(flavor = "multi_thread")]
async fn call_runs_the_full_pipeline() {
    let mock = issues_mock().await;
    let dir = tempfile::tempdir().unwrap();
    let lib = library(dir.path(), &mock.base_url());
    let secrets = secrets_file(dir.path(), &[("gh-token", "gh-secret-7731")]);
    std::fs::write(dir.path().join("policy.yaml"), "rules:\n  - {role: reader, allow: [read]}\nprincipals:\n  rita: {roles: [reader]}\n").unwrap();
    let base = ["--library-dir", lib.to_str().unwrap(), "--secrets-file", secrets.to_str().unwrap(), "--policy-file", "policy.yaml"];
    let run = |extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        toolctl(dir.path(), &args)
    };

    let out = run(&["call", "list_repository_issues", "--params", r#"{"owner":"o","repo":"r"}"#, "--principal", "rita"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v, json!([{"number": 1, "title": "First"}, {"number": 2, "title": "Second"}]));
    assert!(stderr(&out).contains("audit: primitive github.list_repository_issues [read] Allow Ok status=200"));

    let out = run(&["call", "delete_repository", "--params", r#"{"owner":"o","repo":"r"}"#, "--principal", "rita"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("denied"), "{}", stderr(&out));
    assert!(stderr(&out).contains("dangerous"));

    assert_eq!(run(&["call", "no_such_tool"]).status.code(), Some(2));
    assert_eq!(run(&["call", "list_repository_issues", "--params", "[1]"]).status.code(), Some(2));
    assert_eq!(run(&["call", "list_repository_issues", "--params", "{}", "--principal", "rita"]).status.code(), Some(2));

    assert_eq!(mock.requests_to("/repos/o/r"), 0);
    assert!(!stdout(&out).contains("gh-secret-7731") && !stderr(&out).contains("gh-secret-7731"));
}

#[tokio::test(flavor = "multi_thread")]
async fn upstream_terminal_exits_four() {
    let scenario = Scenario::from_yaml("routes:\n  - {method: GET, path: /items, status: 404, body: {message: gone}}\n").unwrap();
    let mock = MockUpstream::start(scenario).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let doc = std::fs::read_to_string(fixtures().join("my_api.dadl")).unwrap().replace("https://api.example.com/v1", &mock.base_url());
    std::fs::write(dir.path().join("my-api.dadl"), doc).unwrap();
    let secrets = secrets_file(dir.path(), &[("my-api-token", "t")]);
    let out = toolctl(dir.path(), &["--library-dir", ".", "--secrets-file", secrets.to_str().unwrap(), "call", "list_items"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("upstream_terminal"));
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("lib")).unwrap();
    std::fs::copy(fixtures().join("my_api.dadl"), dir.path().join("lib/my_api.dadl")).unwrap();
    std::fs::write(dir.path().join("toolctl.yaml"), "library_dir: lib\n").unwrap();
    let out = Command::new(BIN).args(["--config", "toolctl.yaml", "validate"]).current_dir(dir.path()).output().unwrap();
    assert_eq!(stdout(&out), "OK lib/my_api.dadl\n");
    let out = Command::new(BIN)
        .args(["--config", "toolctl.yaml", "validate"])
        .env("DADL_LIBRARY_DIR", fixtures())
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(stdout(&out).lines().count(), 3);
    let out = Command::new(BIN).args(["--config", "nope.yaml", "validate"]).current_dir(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

struct Served {
    child: Child,
    stdin: tokio::process::ChildStdin,
    lines: Lines<BufReader<ChildStdout>>,
}

impl Served {
    async fn request(&mut self, id: u64, method: &str, params: Value) -> Value {
        let msg = json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params});
        self.stdin.write_all(format!("{msg}\n").as_bytes()).await.unwrap();
        let line = tokio::time::timeout(Duration::from_secs(10), self.lines.next_line()).await.unwrap().unwrap().unwrap();
        serde_json::from_str(&line).unwrap()
    }

    async fn search(&mut self, id: u64, query: &str) -> Vec<String> {
        let r = self.request(id, "tools/call", json!({"name": "search", "arguments": {"query": query}})).await;
        r["result"]["structuredContent"]["results"].as_array().unwrap().iter().map(|h| h["name"].as_str().unwrap().to_string()).collect()
    }
}

fn serve(lib: &Path, extra: &[&str]) -> Served {
    let mut cmd = tokio::process::Command::new(BIN);
    cmd.args(["--library-dir", lib.to_str().unwrap(), "serve"])
        .args(extra)
        .env("RUST_LOG", "info")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .kill_on_drop(true);
    let mut child = cmd.spawn().unwrap();
    let stdin = child.stdin.take().unwrap();
    let lines = BufReader::new(child.stdout.take().unwrap()).lines();
    Served { child, stdin, lines }
}

const WIDGETS: &str = "  list_widgets:\n    method: GET\n    path: /widgets\n    access: read\n    description: \"List widgets\"\n";

#[cfg(unix)]
#[tokio::test(flavor = "multi_thread")]
async fn serve_stdio_reloads_on_sighup() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path();
    let listing = std::fs::read_to_string(fixtures().join("my_api.dadl")).unwrap();
    std::fs::write(lib.join("my-api.dadl"), &listing).unwrap();
    let mut s = serve(lib, &[]);
    let init = s.request(1, "initialize", json!({})).await;
    assert!(init["result"]["instructions"].as_str().unwrap().contains("search"));
    let list = s.request(2, "tools/list", json!({})).await;
    assert_eq!(list["result"]["tools"].as_array().unwrap().len(), 2);
    assert!(s.search(3, "widgets").await.is_empty());

    std::fs::write(lib.join("my-api.dadl"), listing.replace("tools:\n", &format!("tools:\n{WIDGETS}"))).unwrap();
    let pid = s.child.id().unwrap().to_string();
    assert!(Command::new("kill").args(["-HUP", &pid]).status().unwrap().success());
    let mut found = Vec::new();
    for i in 0..50 {
        found = s.search(10 + i, "widgets").await;
        if !found.is_empty() {
            break;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    assert_eq!(found, ["list_widgets"]);

    std::fs::write(lib.join("broken.dadl"), "backend: {name: broken}\n").unwrap();
    assert!(Command::new("kill").args(["-HUP", &pid]).status().unwrap().success());
    tokio::time::sleep(Duration::from_millis(500)).await;
    assert_eq!(s.search(100, "widgets").await, ["list_widgets"]);
    let list = s.request(101, "tools/list", json!({})).await;
    assert_eq!(list["result"]["tools"].as_array().unwrap().len(), 2);

    drop(s.stdin);
    let out = tokio::time::timeout(Duration::from_secs(10), s.child.wait_with_output()).await.unwrap().unwrap();
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("reload rejected"), "{log}");
    assert!(log.contains("broken.dadl"));
}

#[tokio::test(flavor = "multi_thread")]
async fn serve_watch_and_native_exposure() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path();
    let listing = std::fs::read_to_string(fixtures().join("my_api.dadl")).unwrap();
    std::fs::write(lib.join("my-api.dadl"), &listing).unwrap();
    let mut s = serve(lib, &["--watch", "--expose-native"]);
    let list = s.request(1, "tools/list", json!({})).await;
    let names: Vec<&str> = list["result"]["tools"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["search", "execute", "list_items"]);
    tokio::time::sleep(Duration::from_millis(50)).await;
    std::fs::write(lib.join("my-api.dadl"), listing.replace("tools:\n", &format!("tools:\n{WIDGETS}"))).unwrap();
    let mut found = Vec::new();
    for i in 0..60 {
        found = s.search(10 + i, "widgets").await;
        if !found.is_empty() {
            break;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    assert_eq!(found, ["list_widgets"]);
}
