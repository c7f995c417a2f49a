mod common;

use std::time::{Duration, Instant};

use common::{harness, Harness};
use dadl_core::http::retry::backoff_bound;
use dadl_core::http::EngineError;
use dadl_core::model::RetryPolicy;
use dadl_core::runtime::InvokeError;
use serde_json::json;

const SLACK_MS: f64 = 250.0;

fn engine_err(e: InvokeError) -> EngineError {
    match e {
        InvokeError::Engine(e) => e,
        other => panic!("expected engine error, got {other:?}"),
    }
}

#[tokio::test]
async fn retry_500_500_200() {
    let h = harness(
        "routes:\n  - method: GET\n    path: /flaky\n    body: {ok: true}\n    error_script:\n      - {on_request_n: 1, status: 500, body: {message: boom}}\n      - {on_request_n: 2, status: 500, body: {message: boom}}\n",
        "error_policy:\n  retryable_statuses: [500]\n  retry: {max_attempts: 3, base_delay: 100ms, multiplier: 2, max_delay: 5s}\ntools:\n  flaky: {method: GET, path: /flaky, access: read}\n",
        &[],
    )
    .await;
    let r = h.call("flaky", json!({})).await.unwrap();
    assert_eq!(r.attempts, 3);
    assert_eq!(r.value, json!({"ok": true}));
    let log = h.mock.requests_received();
    assert_eq!(log.iter().map(|r| r.status).collect::<Vec<_>>(), vec![500, 500, 200]);
    let policy = RetryPolicy {
        max_attempts: 3,
        base_delay: Duration::from_millis(100),
        multiplier: 2.0,
        max_delay: Duration::from_secs(5),
    };
    for (i, pair) in log.windows(2).enumerate() {
        let gap = pair[1].elapsed_ms - pair[0].elapsed_ms;
        let bound = backoff_bound(&policy, i as u32 + 1).as_secs_f64() * 1000.0;
        assert!(gap >= 0.0 && gap <= bound + SLACK_MS, "gap {gap} bound {bound}");
    }
    assert_eq!(h.sink.records()[0].attempts, 3);
}

#[tokio::test]
async fn retries_exhausted() {
    let h = harness(
        "routes:\n  - {method: GET, path: /down, status: 503, body: {message: unavailable}}\n",
        "error_policy:\n  retry: {max_attempts: 2, base_delay: 10ms}\ntools:\n  down: {method: GET, path: /down, access: read}\n",
        &[],
    )
    .await;
    let e = engine_err(h.call("down", json!({})).await.unwrap_err());
    assert!(matches!(e, EngineError::RetriesExhausted { attempts: 2, status: Some(503), .. }), "{e:?}");
    assert_eq!(h.mock.requests_received().len(), 2);
}

#[tokio::test]
async fn retry_after_is_honored() {
    let h = harness(
        "routes:\n  - method: GET\n    path: /x\n    body: 1\n    error_script:\n      - {on_request_n: 1, status: 503, headers: {Retry-After: '1'}}\n",
        "error_policy:\n  retry: {max_attempts: 2, base_delay: 10ms}\ntools:\n  x: {method: GET, path: /x, access: read}\n",
        &[],
    )
    .await;
    h.call("x", json!({})).await.unwrap();
    let log = h.mock.requests_received();
    let gap = log[1].elapsed_ms - log[0].elapsed_ms;
    assert!(gap >= 995.0 && gap <= 1000.0 + SLACK_MS, "gap {gap}");
}

#[tokio::test]
async fn retry_after_beyond_max_delay_gives_up() {
    let h = harness(
        "routes:\n  - {method: GET, path: /x, status: 429, headers: {Retry-After: '600'}}\n",
        "error_policy:\n  retry: {max_attempts: 3, max_delay: 2s}\ntools:\n  x: {method: GET, path: /x, access: read}\n",
        &[],
    )
    .await;
    let started = Instant::now();
    let e = engine_err(h.call("x", json!({})).await.unwrap_err());
    assert!(matches!(e, EngineError::RetriesExhausted { attempts: 1, status: Some(429), .. }), "{e:?}");
    assert!(started.elapsed() < Duration::from_secs(2));
}

#[tokio::test]
async fn terminal_error_extracts_message_and_code() {
    let h = harness(
        "routes:\n  - {method: GET, path: /gone, status: 404, body: {error: {text: no such item, code: E_GONE}}}\n",
        "error_policy:\n  message_path: $.error.text\n  code_path: $.error.code\ntools:\n  gone: {method: GET, path: /gone, access: read}\n",
        &[],
    )
    .await;
    let e = engine_err(h.call("gone", json!({})).await.unwrap_err());
    match e {
        EngineError::UpstreamTerminal { status, message, code } => {
            assert_eq!(status, 404);
            assert_eq!(message, "no such item");
            assert_eq!(code.as_deref(), Some("E_GONE"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(h.mock.requests_received().len(), 1);
}

async fn auth_case(scenario: &str, auth: &str, secrets: &[(&str, &str)]) -> Harness {
    let body = format!("{auth}tools:\n  me: {{method: GET, path: /me, access: read}}\n");
    let mut scen = scenario.to_string();
    scen.push_str("routes:\n  - {method: GET, path: /me, body: {id: 1}}\n");
    harness(&scen, &body, secrets).await
}

#[tokio::test]
async fn bearer_auth() {
    let scen = "auth: {scheme: bearer, token: tok-right}\n";
    let auth = "auth: {type: bearer, credential: vault/tok}\n";
    let ok = auth_case(scen, auth, &[("tok", "tok-right")]).await;
    assert_eq!(ok.call("me", json!({})).await.unwrap().value, json!({"id": 1}));
    let bad = auth_case(scen, auth, &[("tok", "tok-wrong")]).await;
    let e = engine_err(bad.call("me", json!({})).await.unwrap_err());
    assert_eq!(e.status(), Some(401));
    assert!(!e.to_string().contains("tok-wrong"));
}

#[tokio::test]
async fn basic_auth() {
    let scen = "auth: {scheme: basic, username: ann, password: pw-basic}\n";
    let auth = "auth: {type: basic, username: vault/user, password: vault/pass}\n";
    let ok = auth_case(scen, auth, &[("user", "ann"), ("pass", "pw-basic")]).await;
    assert!(ok.call("me", json!({})).await.is_ok());
    let bad = auth_case(scen, auth, &[("user", "ann"), ("pass", "nope")]).await;
    assert_eq!(engine_err(bad.call("me", json!({})).await.unwrap_err()).status(), Some(401));
}

#[tokio::test]
async fn api_key_header_and_query() {
    let h = auth_case(
        "auth: {scheme: api_key, name: X-Api-Key, value: key-123}\n",
        "auth: {type: api_key, credential: vault/key, name: X-Api-Key}\n",
        &[("key", "key-123")],
    )
    .await;
    assert!(h.call("me", json!({})).await.is_ok());
    let h = auth_case(
        "auth: {scheme: api_key, name: api_key, value: key-456, in_query: true}\n",
        "auth: {type: api_key, credential: vault/key, name: api_key, placement: query}\n",
        &[("key", "key-456")],
    )
    .await;
    assert!(h.call("me", json!({})).await.is_ok());
    assert_eq!(h.mock.requests_received()[0].query_value("api_key"), Some("key-456"));
}

fn oauth_doc(mock_url: &str, margin: &str) -> String {
    format!(
        "auth:\n  type: oauth2_client_credentials\n  token_url: {mock_url}/oauth/token\n  client_id: vault/cid\n  client_secret: vault/csecret\n  refresh_margin: {margin}\n"
    )
}

async fn oauth_harness(expires_in: u64, margin: &str, delay_ms: u64) -> Harness {
    let scen = format!(
        "oauth2: {{client_id: cid-1, client_secret: cs-1, expires_in: {expires_in}, delay_ms: {delay_ms}}}\nauth: {{scheme: oauth2}}\nroutes:\n  - {{method: GET, path: /me, body: {{id: 1}}}}\n"
    );
    let mock = common::mock(&scen).await;
    let body = format!("{}tools:\n  me: {{method: GET, path: /me, access: read}}\n", oauth_doc(&mock.base_url(), margin));
    let doc = common::document(&mock.base_url(), &body);
    let (runtime, sink) = common::runtime(
        dadl_core::authz::Policy::allow_all(),
        &[("cid", "cid-1"), ("csecret", "cs-1")],
        Default::default(),
    );
    Harness { mock, doc, runtime, sink }
}

#[tokio::test]
async fn oauth_single_flight_under_16_callers() {
    let h = std::sync::Arc::new(oauth_harness(3600, "60s", 200).await);
    let calls: Vec<_> = (0..16)
        .map(|_| {
            let h = h.clone();
            tokio::spawn(async move { h.call("me", json!({})).await })
        })
        .collect();
    for c in calls {
        c.await.unwrap().unwrap();
    }
    assert_eq!(h.mock.token_fetches(), 1);
    assert_eq!(h.runtime.engine().auth_manager().token_fetches(), 1);
}

#[tokio::test]
async fn oauth_refreshes_inside_margin() {
    let h = oauth_harness(2, "1s", 0).await;
    h.call("me", json!({})).await.unwrap();
    h.call("me", json!({})).await.unwrap();
    assert_eq!(h.mock.token_fetches(), 1);
    tokio::time::sleep(Duration::from_millis(1200)).await;
    h.call("me", json!({})).await.unwrap();
    assert_eq!(h.mock.token_fetches(), 2);
}

#[tokio::test]
async fn oauth_revoked_token_is_refetched_once() {
    let h = oauth_harness(3600, "60s", 0).await;
    h.call("me", json!({})).await.unwrap();
    h.mock.revoke_tokens();
    let r = h.call("me", json!({})).await.unwrap();
    assert_eq!(r.attempts, 2);
    assert_eq!(h.mock.requests_to("/me"), 3);
    assert_eq!(h.mock.token_fetches(), 2);
}

#[tokio::test]
async fn oauth_bad_client_secret_is_scrubbed() {
    let scen = "oauth2: {client_id: cid-1, client_secret: cs-1}\nauth: {scheme: oauth2}\nroutes:\n  - {method: GET, path: /me, body: {id: 1}}\n";
    let mock = common::mock(scen).await;
    let body = format!("{}tools:\n  me: {{method: GET, path: /me, access: read}}\n", oauth_doc(&mock.base_url(), "60s"));
    let doc = common::document(&mock.base_url(), &body);
    let (runtime, sink) =
        common::runtime(dadl_core::authz::Policy::allow_all(), &[("cid", "cid-1"), ("csecret", "wrong-secret-value")], Default::default());
    let h = Harness { mock, doc, runtime, sink };
    let e = h.call("me", json!({})).await.unwrap_err();
    assert_eq!(e.kind(), "auth_error");
    assert!(!e.to_string().contains("wrong-secret-value"));
    assert_eq!(h.mock.requests_to("/me"), 0);
}

fn session_doc() -> &'static str {
    "auth:\n  type: session\n  login:\n    path: /login\n    body:\n      user: alice\n      pass: {credential: vault/sess-pass}\n  token_extract: $.token\n  token_header: X-Session-Token\ntools:\n  me: {method: GET, path: /me, access: read}\n"
}

const SESSION_SCENARIO: &str = "session: {fields: {user: alice, pass: pw-sess}}\nauth: {scheme: session, header: X-Session-Token}\nroutes:\n  - {method: GET, path: /me, body: {id: 1}}\n";

#[tokio::test]
async fn session_login_and_relogin() {
    let h = harness(SESSION_SCENARIO, session_doc(), &[("sess-pass", "pw-sess")]).await;
    h.call("me", json!({})).await.unwrap();
    h.call("me", json!({})).await.unwrap();
    assert_eq!(h.mock.logins(), 1);
    h.mock.expire_sessions();
    let r = h.call("me", json!({})).await.unwrap();
    assert_eq!(r.value, json!({"id": 1}));
    assert_eq!(h.mock.logins(), 2);
}

#[tokio::test]
async fn session_bad_password_fails_login() {
    let h = harness(SESSION_SCENARIO, session_doc(), &[("sess-pass", "pw-wrong")]).await;
    let e = h.call("me", json!({})).await.unwrap_err();
    assert_eq!(e.kind(), "auth_error");
    assert!(!e.to_string().contains("pw-wrong"));
    assert_eq!(h.mock.requests_to("/me"), 0);
}

#[tokio::test]
async fn same_origin_redirect_followed_cross_origin_refused() {
    let h = harness(
        "routes:\n  - {method: GET, path: /old, redirect: {to: /new, status: 301}}\n  - {method: GET, path: /away, redirect: {to: 'http://example.invalid/x'}}\n  - {method: GET, path: /new, body: {moved: true}}\n",
        "auth: {type: bearer, credential: vault/tok}\ntools:\n  old: {method: GET, path: /old, access: read}\n  away: {method: GET, path: /away, access: read}\n",
        &[("tok", "tok-redirect")],
    )
    .await;
    assert_eq!(h.call("old", json!({})).await.unwrap().value, json!({"moved": true}));
    let e = engine_err(h.call("away", json!({})).await.unwrap_err());
    assert_eq!(e.kind(), "redirect_refused");
}

#[tokio::test]
async fn path_injection_never_reaches_the_wire() {
    let h = harness(
        "routes:\n  - {method: GET, path: '/item/{id}', body: 1}\n",
        "tools:\n  item:\n    method: GET\n    path: /item/{id}\n    access: read\n    params:\n      id: {type: string, required: true, location: path}\n",
        &[],
    )
    .await;
    for bad in ["..", "../admin", "a/../../b", ""] {
        let e = h.call("item", json!({ "id": bad })).await.unwrap_err();
        assert_eq!(e.kind(), "invalid_params", "{bad:?}");
    }
    assert!(h.mock.requests_received().is_empty());
    h.call("item", json!({"id": "a b/c"})).await.unwrap_err();
    let ok = h.call("item", json!({"id": "a b"})).await;
    assert!(ok.is_ok());
    assert_eq!(h.mock.requests_received().last().unwrap().path, "/item/a%20b");
}

#[tokio::test]
async fn rate_gate_keeps_eight_sessions_under_quota() {
    let h = std::sync::Arc::new(
        harness(
            "rate_headers: {limit: 10, window_ms: 1000}\nroutes:\n  - {method: GET, path: /x, body: 1, delay_ms: 5}\n",
            "auth: {type: bearer, credential: vault/tok}\nrate_limit: {pause_threshold: 1, reset_header: X-RateLimit-Reset, default_pause: 1s}\ntools:\n  x: {method: GET, path: /x, access: read}\n",
            &[("tok", "shared")],
        )
        .await,
    );
    let sessions: Vec<_> = (0..8)
        .map(|_| {
            let h = h.clone();
            tokio::spawn(async move {
                for _ in 0..3 {
                    h.call("x", json!({})).await.unwrap();
                }
            })
        })
        .collect();
    for s in sessions {
        s.await.unwrap();
    }
    assert_eq!(h.mock.over_quota(), 0);
    assert_eq!(h.mock.requests_received().len(), 24);
}
