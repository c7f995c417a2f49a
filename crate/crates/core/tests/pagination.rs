mod common;

use common::{harness, Harness};
use serde_json::{json, Value};

const PAGE: usize = 4;

fn style_config(style: &str) -> (&'static str, &'static str) {
    match style {
        "cursor" => (
            "request_params: {cursor: cursor, page_size: limit}\n      response_paths: {next_cursor: $.next_cursor, items: $.data}",
            "",
        ),
        "offset" => ("request_params: {offset: offset, page_size: limit}\n      response_paths: {items: $.data}", ""),
        "page" => ("request_params: {page: page, page_size: limit}\n      response_paths: {items: $.data}", ""),
        "link_header" => ("request_params: {page_size: limit}", ", items_key: null"),
        other => panic!("{other}"),
    }
}

async fn setup(style: &str, total: usize, max_pages: u32, behavior: &str) -> Harness {
    let items: Vec<Value> = (0..total).map(|i| json!({ "n": i })).collect();
    let (doc_cfg, mock_extra) = style_config(style);
    let scenario = format!(
        "routes:\n  - method: GET\n    path: /things\n    items: {}\n    pagination: {{style: {style}, page_size: {PAGE}{mock_extra}}}\n",
        serde_json::to_string(&items).unwrap()
    );
    let doc = format!(
        "tools:\n  things:\n    method: GET\n    path: /things\n    access: read\n    pagination:\n      strategy: {style}\n      page_size: {PAGE}\n      max_pages: {max_pages}\n      behavior: {behavior}\n      {doc_cfg}\n"
    );
    harness(&scenario, &doc, &[]).await
}

fn numbers(v: &Value) -> Vec<u64> {
    v.as_array().expect("array result").iter().map(|x| x["n"].as_u64().unwrap()).collect()
}

const STYLES: [&str; 4] = ["cursor", "offset", "page", "link_header"];

#[tokio::test]
async fn auto_mode_matrix() {
    for style in STYLES {
        for (total, max_pages, want, truncated) in [
            (2 * PAGE, 10, 2 * PAGE, false),
            (2 * PAGE + 1, 10, 2 * PAGE + 1, false),
            (0, 10, 0, false),
            (5 * PAGE, 2, 2 * PAGE, true),
        ] {
            let h = setup(style, total, max_pages, "auto").await;
            let r = h.call("things", json!({})).await.unwrap_or_else(|e| panic!("{style} {total}: {e}"));
            let expect: Vec<u64> = (0..want as u64).collect();
            assert_eq!(numbers(&r.value), expect, "{style} total={total}");
            assert_eq!(r.truncated, truncated, "{style} total={total}");
            assert!(r.pages_fetched <= max_pages, "{style} total={total}");
            assert_eq!(r.pages_fetched as usize, h.mock.requests_received().len());
            let min_pages = total.div_ceil(PAGE).clamp(1, max_pages as usize);
            assert!(r.pages_fetched as usize >= min_pages, "{style} total={total}");
        }
    }
}

#[tokio::test]
async fn expose_mode_matrix() {
    for style in STYLES {
        for total in [2 * PAGE, 2 * PAGE + 1, 0, 5 * PAGE] {
            let h = setup(style, total, 10, "expose").await;
            let mut seen = Vec::new();
            let mut cursor: Option<String> = None;
            let mut calls = 0;
            loop {
                let p = match &cursor {
                    Some(c) => json!({ "_cursor": c }),
                    None => json!({}),
                };
                let r = h.call("things", p).await.unwrap_or_else(|e| panic!("{style} {total}: {e}"));
                calls += 1;
                assert_eq!(r.pages_fetched, 1);
                let page = numbers(&r.value);
                assert!(page.len() <= PAGE);
                seen.extend(page);
                match r.next_cursor {
                    Some(c) => cursor = Some(c),
                    None => break,
                }
                assert!(calls <= total / PAGE + 2, "{style}: runaway cursor");
            }
            assert_eq!(seen, (0..total as u64).collect::<Vec<_>>(), "{style} total={total}");
        }
    }
}

#[tokio::test]
async fn garbage_cursor_is_rejected() {
    for style in ["offset", "page", "link_header"] {
        let h = setup(style, 10, 10, "expose").await;
        let e = h.call("things", json!({"_cursor": "zz:not-a-cursor"})).await.unwrap_err();
        assert_eq!(e.kind(), "pagination_error", "{style}");
        assert!(h.mock.requests_received().is_empty(), "{style}");
    }
}

#[tokio::test]
async fn cursor_param_is_refused_in_auto_mode() {
    let h = setup("cursor", 10, 10, "auto").await;
    let e = h.call("things", json!({"_cursor": "abc"})).await.unwrap_err();
    assert_eq!(e.kind(), "invalid_params");
    assert!(h.mock.requests_received().is_empty());
}
