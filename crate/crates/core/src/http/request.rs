use std::collections::BTreeMap;
use std::time::Duration;

use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
use serde_json::{Map, Value};
use url::Url;

use crate::model::{HttpMethod, ParamLocation, ResolvedParam, ResolvedTool};

/// Characters escaped inside one substituted path segment.
const SEGMENT: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'/')
    .add(b'<')
    .add(b'>')
    .add(b'?')
    .add(b'[')
    .add(b'\\')
    .add(b']')
    .add(b'^')
    .add(b'`')
    .add(b'{')
    .add(b'|')
    .add(b'}');

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RequestError {
    #[error("missing required parameter `{0}`")]
    MissingRequiredParam(String),
    #[error("parameter `{name}` must be of type {expected}")]
    TypeMismatch { name: String, expected: String },
    #[error("parameter `{name}` must be one of the declared enum values")]
    NotInEnum { name: String },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{0}` is not a safe path segment")]
    PathInjection(String),
    #[error("invalid URL: {0}")]
    InvalidUrl(String),
}

/// Pagination additions for one page request.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PageRequest {
    pub query: Vec<(String, String)>,
    /// Absolute next-page URL from a `Link` header; replaces the built URL.
    pub url_override: Option<Url>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequestPlan {
    pub method: HttpMethod,
    pub url: Url,
    pub headers: Vec<(String, String)>,
    pub body: Option<Value>,
    pub timeout: Duration,
}

/// Fill in defaults and check params against their declarations.
pub fn normalize_params(tool: &ResolvedTool, params: &Map<String, Value>) -> Result<Map<String, Value>, RequestError> {
    normalize_against(&tool.params, params)
}

pub fn normalize_against(
    defs: &BTreeMap<String, ResolvedParam>,
    params: &Map<String, Value>,
) -> Result<Map<String, Value>, RequestError> {
    if let Some(unknown) = params.keys().find(|k| !defs.contains_key(*k)) {
        return Err(RequestError::UnknownParam(unknown.clone()));
    }
    let mut out = Map::new();
    for (name, def) in defs {
        let value = match params.get(name) {
            Some(Value::Null) | None => def.default.clone(),
            Some(v) => Some(v.clone()),
        };
        match value {
            Some(v) => {
                check_type(name, def, &v)?;
                out.insert(name.clone(), v);
            }
            None if def.required => return Err(RequestError::MissingRequiredParam(name.clone())),
            None => {}
        }
    }
    Ok(out)
}

fn check_type(name: &str, def: &ResolvedParam, v: &Value) -> Result<(), RequestError> {
    let ok = match def.kind.as_deref() {
        Some("string") => v.is_string(),
        Some("integer") => v.as_i64().is_some() || v.as_u64().is_some() || v.as_f64().is_some_and(|f| f.fract() == 0.0),
        Some("number") => v.is_number(),
        Some("boolean") => v.is_boolean(),
        Some("array") => v.is_array(),
        Some("object") => v.is_object(),
        _ => true,
    };
    if !ok {
        return Err(RequestError::TypeMismatch {
            name: name.to_string(),
            expected: def.kind.clone().unwrap_or_default(),
        });
    }
    if let Some(allowed) = &def.allowed {
        if !allowed.contains(v) {
            return Err(RequestError::NotInEnum { name: name.to_string() });
        }
    }
    Ok(())
}

/// Text form of a scalar parameter; arrays and objects are sent as JSON.
pub fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.to_string(),
            (None, Some(f)) if f.fract() == 0.0 && f.abs() < 9e15 => format!("{f:.0}"),
            _ => n.to_string(),
        },
        Value::Bool(b) => b.to_string(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn safe_segment(value: &str) -> bool {
    !value.is_empty() && value != "." && value != ".." && !value.contains('/') && !value.contains('\\') && !value.contains("..")
}

/// Join `base_url` and a path that may carry its own query string.
pub fn join_url(base_url: &str, path: &str) -> Result<Url, RequestError> {
    let base = base_url.trim_end_matches('/');
    let path = if path.starts_with('/') { path.to_string() } else { format!("/{path}") };
    Url::parse(&format!("{base}{path}")).map_err(|e| RequestError::InvalidUrl(e.to_string()))
}

/// Assemble the HTTP request for one page of a tool call. `params` must already be normalized.
pub fn build_request(tool: &ResolvedTool, params: &Map<String, Value>, page: &PageRequest) -> Result<HttpRequestPlan, RequestError> {
    let mut path = tool.path.clone();
    let mut query: Vec<(String, String)> = Vec::new();
    let mut headers: Vec<(String, String)> = tool.headers.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let mut body = Map::new();

    for (name, def) in &tool.params {
        let Some(value) = params.get(name) else { continue };
        match def.location {
            ParamLocation::Path => {
                let text = scalar_text(value);
                if !safe_segment(&text) {
                    return Err(RequestError::PathInjection(name.clone()));
                }
                let encoded = utf8_percent_encode(&text, SEGMENT).to_string();
                path = path.replace(&format!("{{{name}}}"), &encoded);
            }
            ParamLocation::Query => match value {
                Value::Array(items) => {
                    for item in items {
                        query.push((name.clone(), scalar_text(item)));
                    }
                }
                other => query.push((name.clone(), scalar_text(other))),
            },
            ParamLocation::Header => headers.push((name.clone(), scalar_text(value))),
            ParamLocation::Body => {
                body.insert(name.clone(), value.clone());
            }
        }
    }

    let url = match &page.url_override {
        Some(u) => u.clone(),
        None => {
            let mut url = join_url(&tool.base_url, &path)?;
            {
                let mut pairs = url.query_pairs_mut();
                for (k, v) in query.iter().chain(page.query.iter()) {
                    pairs.append_pair(k, v);
                }
            }
            if url.query() == Some("") {
                url.set_query(None);
            }
            url
        }
    };

    let body = (!body.is_empty()).then_some(Value::Object(body));
    Ok(HttpRequestPlan { method: tool.method, url, headers, body, timeout: tool.timeout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{effective_tool, fixtures, parse_document};
    use serde_json::json;

    fn tool(yaml_tools: &str) -> ResolvedTool {
        let doc = parse_document(&format!(
            "backend: {{name: t, type: rest, base_url: 'https://api.example.com/v1'}}\ntools:\n{yaml_tools}"
        ))
        .unwrap();
        let name = doc.tools.keys().next().unwrap().clone();
        effective_tool(&doc, &name).unwrap()
    }

    fn obj(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn my_api_list_items() {
        let doc = parse_document(fixtures::MY_API).unwrap();
        let t = effective_tool(&doc, "list_items").unwrap();
        let plan = build_request(&t, &Map::new(), &PageRequest::default()).unwrap();
        assert_eq!(plan.method, HttpMethod::Get);
        assert_eq!(plan.url.as_str(), "https://api.example.com/v1/items");
        assert_eq!(plan.body, None);
    }

    #[test]
    fn placeholders_substituted_and_encoded() {
        let t = tool("  get: {method: GET, path: '/repos/{owner}/{repo}', params: {owner: {type: string}, repo: {type: string}}}\n");
        let p = normalize_params(&t, &obj(json!({"owner": "a", "repo": "b c"}))).unwrap();
        let plan = build_request(&t, &p, &PageRequest::default()).unwrap();
        assert_eq!(plan.url.path(), "/v1/repos/a/b%20c");
    }

    #[test]
    fn traversal_rejected() {
        let t = tool("  get: {method: GET, path: '/repos/{owner}', params: {owner: {type: string}}}\n");
        for bad in ["../admin", "a/b", "", "..", "."] {
            let p = normalize_params(&t, &obj(json!({ "owner": bad })));
            let r = p.and_then(|p| build_request(&t, &p, &PageRequest::default()));
            assert_eq!(r.unwrap_err(), RequestError::PathInjection("owner".into()), "{bad:?}");
        }
    }

    #[test]
    fn locations_and_defaults() {
        let t = tool(
            "  create:\n    method: POST\n    path: /items\n    params:\n      title: {type: string, required: true}\n      dry: {type: boolean, location: query, default: false}\n      X-Trace: {type: string, location: header}\n",
        );
        let p = normalize_params(&t, &obj(json!({"title": "x", "X-Trace": "abc"}))).unwrap();
        let plan = build_request(&t, &p, &PageRequest::default()).unwrap();
        assert_eq!(plan.url.as_str(), "https://api.example.com/v1/items?dry=false");
        assert_eq!(plan.body, Some(json!({"title": "x"})));
        assert!(plan.headers.contains(&("X-Trace".into(), "abc".into())));
    }

    #[test]
    fn param_errors() {
        let t = tool("  get: {method: GET, path: /x, params: {n: {type: integer, required: true}, s: {type: string, enum: [a, b]}}}\n");
        assert_eq!(normalize_params(&t, &Map::new()).unwrap_err(), RequestError::MissingRequiredParam("n".into()));
        assert!(matches!(normalize_params(&t, &obj(json!({"n": "1"}))), Err(RequestError::TypeMismatch { .. })));
        assert!(matches!(normalize_params(&t, &obj(json!({"n": 1, "s": "c"}))), Err(RequestError::NotInEnum { .. })));
        assert_eq!(normalize_params(&t, &obj(json!({"n": 1, "zz": 1}))).unwrap_err(), RequestError::UnknownParam("zz".into()));
        assert!(normalize_params(&t, &obj(json!({"n": 2.0}))).is_ok());
    }

    #[test]
    fn pagination_query_appended() {
        let t = tool("  list: {method: GET, path: /items}\n");
        let page = PageRequest { query: vec![("cursor".into(), "c2".into())], url_override: None };
        let plan = build_request(&t, &Map::new(), &page).unwrap();
        assert_eq!(plan.url.as_str(), "https://api.example.com/v1/items?cursor=c2");
    }
}
