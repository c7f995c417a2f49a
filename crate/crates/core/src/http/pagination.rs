use serde_json::Value;
use url::Url;

use super::request::PageRequest;
use crate::model::{PaginationConfig, PaginationStrategy};
use crate::transform::JsonPath;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PaginationError {
    #[error("malformed Link header: {0}")]
    MalformedLinkHeader(String),
    #[error("invalid response path `{0}`")]
    InvalidPath(String),
    #[error("page body is not an array and no items path is configured")]
    ItemsNotArray,
    #[error("invalid pagination cursor")]
    InvalidCursor,
}

/// Position within a paginated listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PagePosition {
    Cursor(Option<String>),
    Offset(u64),
    Page(u64),
    Link(Option<Url>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaginationState {
    pub strategy: PaginationStrategy,
    pub pages_fetched: u32,
    pub position: PagePosition,
}

impl PaginationState {
    pub fn start(cfg: &PaginationConfig) -> Self {
        let position = match cfg.strategy {
            PaginationStrategy::Cursor => PagePosition::Cursor(None),
            PaginationStrategy::Offset => PagePosition::Offset(0),
            PaginationStrategy::Page => PagePosition::Page(1),
            PaginationStrategy::LinkHeader => PagePosition::Link(None),
        };
        PaginationState { strategy: cfg.strategy, pages_fetched: 0, position }
    }

    /// Resume from a cursor previously surfaced by [`PaginationState::expose_cursor`].
    pub fn resume(cfg: &PaginationConfig, cursor: &str) -> Result<Self, PaginationError> {
        let position = match cfg.strategy {
            PaginationStrategy::Cursor => PagePosition::Cursor(Some(cursor.to_string())),
            PaginationStrategy::Offset => PagePosition::Offset(
                cursor.strip_prefix("o:").and_then(|n| n.parse().ok()).ok_or(PaginationError::InvalidCursor)?,
            ),
            PaginationStrategy::Page => PagePosition::Page(
                cursor
                    .strip_prefix("p:")
                    .and_then(|n| n.parse().ok())
                    .filter(|n| *n >= 1)
                    .ok_or(PaginationError::InvalidCursor)?,
            ),
            PaginationStrategy::LinkHeader => PagePosition::Link(Some(
                cursor.strip_prefix("l:").and_then(|u| Url::parse(u).ok()).ok_or(PaginationError::InvalidCursor)?,
            )),
        };
        Ok(PaginationState { strategy: cfg.strategy, pages_fetched: 0, position })
    }

    /// Opaque token the caller passes back as `_cursor` to continue.
    pub fn expose_cursor(&self) -> String {
        match &self.position {
            PagePosition::Cursor(c) => c.clone().unwrap_or_default(),
            PagePosition::Offset(n) => format!("o:{n}"),
            PagePosition::Page(n) => format!("p:{n}"),
            PagePosition::Link(u) => format!("l:{}", u.as_ref().map(Url::as_str).unwrap_or_default()),
        }
    }

    /// Request additions for the page about to be fetched.
    pub fn page_request(&self, cfg: &PaginationConfig) -> PageRequest {
        let mut query = Vec::new();
        let size = cfg.page_size.get().to_string();
        let size_param = cfg.request_params.page_size.clone();
        let mut url_override = None;
        match &self.position {
            PagePosition::Cursor(c) => {
                if let (Some(c), Some(name)) = (c, &cfg.request_params.cursor) {
                    query.push((name.clone(), c.clone()));
                }
            }
            PagePosition::Offset(n) => {
                if let Some(name) = &cfg.request_params.offset {
                    query.push((name.clone(), n.to_string()));
                }
            }
            PagePosition::Page(n) => {
                if let Some(name) = &cfg.request_params.page {
                    query.push((name.clone(), n.to_string()));
                }
            }
            PagePosition::Link(u) => url_override = u.clone(),
        }
        if url_override.is_none() {
            if let Some(name) = size_param {
                query.push((name, size));
            }
        }
        PageRequest { query, url_override }
    }
}

/// Items of one page: `response_paths.items` if configured, else the whole body.
pub fn page_items(cfg: &PaginationConfig, body: &Value) -> Result<Vec<Value>, PaginationError> {
    let found = match &cfg.response_paths.items {
        Some(p) => {
            let path = JsonPath::parse(p).map_err(|_| PaginationError::InvalidPath(p.clone()))?;
            path.first(body).cloned()
        }
        None => Some(body.clone()),
    };
    match found {
        Some(Value::Array(items)) => Ok(items),
        Some(Value::Null) | None if cfg.response_paths.items.is_some() => Ok(Vec::new()),
        _ => Err(PaginationError::ItemsNotArray),
    }
}

/// Extract the `rel="next"` target from a `Link` header value.
pub fn parse_link_next(header: &str) -> Result<Option<String>, PaginationError> {
    let mut rest = header.trim();
    while !rest.is_empty() {
        let open = rest.strip_prefix('<').ok_or_else(|| PaginationError::MalformedLinkHeader(header.to_string()))?;
        let close = open.find('>').ok_or_else(|| PaginationError::MalformedLinkHeader(header.to_string()))?;
        let target = &open[..close];
        let after = &open[close + 1..];
        let (params, tail) = split_link_value(after);
        let is_next = params.split(';').filter_map(|p| p.split_once('=')).any(|(k, v)| {
            k.trim().eq_ignore_ascii_case("rel")
                && v.trim().trim_matches('"').split_ascii_whitespace().any(|r| r.eq_ignore_ascii_case("next"))
        });
        if is_next {
            return Ok(Some(target.to_string()));
        }
        rest = tail.trim_start();
    }
    Ok(None)
}

/// Split `; params..., <next>` at the first comma outside quotes.
fn split_link_value(s: &str) -> (&str, &str) {
    let mut quoted = false;
    for (i, c) in s.char_indices() {
        match c {
            '"' => quoted = !quoted,
            ',' if !quoted => return (&s[..i], &s[i + 1..]),
            _ => {}
        }
    }
    (s, "")
}

/// Outcome of inspecting one fetched page.
#[derive(Debug, Clone, PartialEq)]
pub struct PageStep {
    /// State for the following page, or `None` when the listing is exhausted.
    pub next: Option<PaginationState>,
    pub warning: Option<String>,
}

/// Whether items remain past `seen`, from the configured `total` path. `None` when unknown.
fn more_items(cfg: &PaginationConfig, body: &Value, seen: u64) -> Option<bool> {
    let path = JsonPath::parse(cfg.response_paths.total.as_deref()?).ok()?;
    let total = match path.first(body)? {
        Value::Number(n) => n.as_u64()?,
        Value::String(s) => s.parse().ok()?,
        _ => return None,
    };
    Some(seen < total)
}

/// Decide the next page from the last response. `state.pages_fetched` must already count it.
pub fn next_request(
    cfg: &PaginationConfig,
    state: &PaginationState,
    body: &Value,
    link_header: Option<&str>,
    item_count: usize,
    request_url: &Url,
) -> Result<PageStep, PaginationError> {
    let full_page = item_count as u64 >= u64::from(cfg.page_size.get());
    let (position, warning) = match &state.position {
        PagePosition::Cursor(_) => {
            let path_text = cfg.response_paths.next_cursor.as_deref().unwrap_or("$.next_cursor");
            let path = JsonPath::parse(path_text).map_err(|_| PaginationError::InvalidPath(path_text.to_string()))?;
            match path.first(body) {
                Some(Value::String(s)) if !s.is_empty() => (Some(PagePosition::Cursor(Some(s.clone()))), None),
                Some(Value::Number(n)) => (Some(PagePosition::Cursor(Some(n.to_string()))), None),
                Some(_) => (None, None),
                None if item_count > 0 => {
                    (None, Some(format!("cursor path `{path_text}` not found in response; stopped pagination")))
                }
                None => (None, None),
            }
        }
        PagePosition::Offset(n) => {
            let more = more_items(cfg, body, n + item_count as u64).unwrap_or(full_page);
            (more.then(|| PagePosition::Offset(n + u64::from(cfg.page_size.get()))), None)
        }
        PagePosition::Page(n) => {
            let seen = n.saturating_sub(1) * u64::from(cfg.page_size.get()) + item_count as u64;
            let more = more_items(cfg, body, seen).unwrap_or(full_page);
            (more.then(|| PagePosition::Page(n + 1)), None)
        }
        PagePosition::Link(_) => match link_header.map(parse_link_next).transpose()?.flatten() {
            Some(target) => {
                let url = request_url
                    .join(&target)
                    .map_err(|_| PaginationError::MalformedLinkHeader(target.clone()))?;
                (Some(PagePosition::Link(Some(url))), None)
            }
            None => (None, None),
        },
    };
    Ok(PageStep {
        next: position.map(|position| PaginationState { strategy: state.strategy, pages_fetched: state.pages_fetched, position }),
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::num::NonZeroU32;

    fn cfg(strategy: PaginationStrategy, page_size: u32) -> PaginationConfig {
        let mut c: PaginationConfig = serde_json::from_value(json!({
            "strategy": strategy.as_str(),
            "request_params": {"cursor": "cursor", "offset": "offset", "page": "page", "page_size": "limit"},
            "response_paths": {"next_cursor": "$.next_cursor", "items": "$.data"},
        }))
        .unwrap();
        c.page_size = NonZeroU32::new(page_size).unwrap();
        c
    }

    fn url() -> Url {
        Url::parse("https://api.x/items").unwrap()
    }

    #[test]
    fn cursor_chains() {
        let c = cfg(PaginationStrategy::Cursor, 2);
        let s = PaginationState::start(&c);
        assert_eq!(s.page_request(&c).query, vec![("limit".to_string(), "2".to_string())]);
        let body = json!({"next_cursor": "c2", "data": [1, 2]});
        let step = next_request(&c, &s, &body, None, 2, &url()).unwrap();
        let n = step.next.unwrap();
        assert_eq!(n.page_request(&c).query[0], ("cursor".to_string(), "c2".to_string()));
        let last = json!({"next_cursor": null, "data": [1]});
        assert!(next_request(&c, &n, &last, None, 1, &url()).unwrap().next.is_none());
    }

    #[test]
    fn cursor_path_miss_warns() {
        let c = cfg(PaginationStrategy::Cursor, 2);
        let s = PaginationState::start(&c);
        let step = next_request(&c, &s, &json!({"data": [1]}), None, 1, &url()).unwrap();
        assert!(step.next.is_none());
        assert!(step.warning.is_some());
        let empty = next_request(&c, &s, &json!({"data": []}), None, 0, &url()).unwrap();
        assert!(empty.warning.is_none());
    }

    #[test]
    fn offset_stops_on_short_page() {
        let c = cfg(PaginationStrategy::Offset, 50);
        let s = PaginationState::start(&c);
        let full = next_request(&c, &s, &json!({}), None, 50, &url()).unwrap().next.unwrap();
        assert_eq!(full.position, PagePosition::Offset(50));
        assert!(next_request(&c, &full, &json!({}), None, 12, &url()).unwrap().next.is_none());
    }

    #[test]
    fn total_ends_a_full_last_page() {
        let mut c = cfg(PaginationStrategy::Offset, 4);
        c.response_paths.total = Some("$.total".into());
        let s = PaginationState::start(&c);
        let next = next_request(&c, &s, &json!({"total": 8}), None, 4, &url()).unwrap().next.unwrap();
        assert!(next_request(&c, &next, &json!({"total": 8}), None, 4, &url()).unwrap().next.is_none());
        let mut p = cfg(PaginationStrategy::Page, 4);
        p.response_paths.total = Some("$.total".into());
        let s = PaginationState::start(&p);
        assert!(next_request(&p, &s, &json!({"total": "4"}), None, 4, &url()).unwrap().next.is_none());
        assert!(next_request(&p, &s, &json!({"total": 9}), None, 4, &url()).unwrap().next.is_some());
        assert!(next_request(&p, &s, &json!({}), None, 4, &url()).unwrap().next.is_some());
    }

    #[test]
    fn link_next_verbatim() {
        let c = cfg(PaginationStrategy::LinkHeader, 2);
        let s = PaginationState::start(&c);
        let h = r#"<https://api.x/items?page=2>; rel="next", <https://api.x/items?page=9>; rel="last""#;
        let n = next_request(&c, &s, &json!([]), Some(h), 2, &url()).unwrap().next.unwrap();
        assert_eq!(n.page_request(&c).url_override.unwrap().as_str(), "https://api.x/items?page=2");
    }

    #[test]
    fn link_parsing() {
        assert_eq!(parse_link_next(r#"<a>; rel="prev", <b>; rel="next""#).unwrap(), Some("b".into()));
        assert_eq!(parse_link_next(r#"<b>; title="x, y"; rel=next"#).unwrap(), Some("b".into()));
        assert_eq!(parse_link_next(r#"<a>; rel="prev""#).unwrap(), None);
        assert!(parse_link_next("garbage").is_err());
        assert!(parse_link_next("<unterminated; rel=next").is_err());
    }

    #[test]
    fn expose_cursor_round_trip() {
        for strategy in [PaginationStrategy::Cursor, PaginationStrategy::Offset, PaginationStrategy::Page, PaginationStrategy::LinkHeader] {
            let c = cfg(strategy, 5);
            let mut s = PaginationState::start(&c);
            s.position = match strategy {
                PaginationStrategy::Cursor => PagePosition::Cursor(Some("abc=".into())),
                PaginationStrategy::Offset => PagePosition::Offset(10),
                PaginationStrategy::Page => PagePosition::Page(3),
                PaginationStrategy::LinkHeader => PagePosition::Link(Some(Url::parse("https://api.x/items?p=3").unwrap())),
            };
            let r = PaginationState::resume(&c, &s.expose_cursor()).unwrap();
            assert_eq!(r.position, s.position);
        }
        assert!(PaginationState::resume(&cfg(PaginationStrategy::Offset, 5), "zz").is_err());
    }

    #[test]
    fn items_extraction() {
        let c = cfg(PaginationStrategy::Cursor, 2);
        assert_eq!(page_items(&c, &json!({"data": [1, 2]})).unwrap().len(), 2);
        assert_eq!(page_items(&c, &json!({})).unwrap().len(), 0);
        let mut bare = c.clone();
        bare.response_paths.items = None;
        assert_eq!(page_items(&bare, &json!([1])).unwrap().len(), 1);
        assert_eq!(page_items(&bare, &json!({"a": 1})).unwrap_err(), PaginationError::ItemsNotArray);
    }
}
