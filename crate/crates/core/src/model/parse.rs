use serde_json::{Map, Number, Value};
use serde_yaml::Value as Yaml;

use super::types::DadlDocument;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("YAML error{}: {message}", location.map(|(l, c)| format!(" at line {l}, column {c}")).unwrap_or_default())]
    Yaml {
        message: String,
        location: Option<(usize, usize)>,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
}

impl ParseError {
    pub fn path(&self) -> Option<&str> {
        match self {
            ParseError::Schema { path, .. } => Some(path),
            ParseError::Yaml { .. } => None,
        }
    }

    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<serde_yaml::Error> for ParseError {
    fn from(e: serde_yaml::Error) -> Self {
        ParseError::Yaml {
            location: e.location().map(|l| (l.line(), l.column())),
            message: e.to_string(),
        }
    }
}

/// Parse `.dadl` text into a document.
///
/// Anchors, aliases and `<<` merge keys are expanded by the YAML layer,
/// custom tags are rejected, and every underscore-prefixed mapping key is
/// dropped before the schema is applied.
pub fn parse_document(yaml_text: &str) -> Result<DadlDocument, ParseError> {
    let mut raw: Yaml = serde_yaml::from_str(yaml_text)?;
    raw.apply_merge()?;
    let mut json = yaml_to_json(raw, "")?;

    let root = json
        .as_object_mut()
        .ok_or_else(|| ParseError::schema("", "document root must be a mapping"))?;

    match root.get("tools") {
        None => return Err(ParseError::schema("tools", "missing required field `tools`")),
        Some(Value::Array(_)) => {
            return Err(ParseError::schema(
                "tools",
                "tools must be a map keyed by tool name, not a list",
            ))
        }
        Some(Value::Null) => {
            root.insert("tools".into(), Value::Object(Map::new()));
        }
        _ => {}
    }

    let declared_contains_code = match root.remove("contains_code") {
        None | Some(Value::Null) => None,
        Some(Value::Bool(b)) => Some(b),
        Some(other) => {
            return Err(ParseError::schema(
                "contains_code",
                format!("expected a boolean, got {other}"),
            ))
        }
    };

    if let Some(Value::Object(hints)) = root.get_mut("hints") {
        for (tool, entries) in hints.iter_mut() {
            if let Value::Object(entries) = entries {
                for (key, v) in entries.iter_mut() {
                    *v = Value::String(hint_text(v, &format!("hints.{tool}.{key}"))?);
                }
            }
        }
    }

    let mut doc: DadlDocument = serde_path_to_error::deserialize(json).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        ParseError::schema(path, e.into_inner().to_string())
    })?;

    doc.contains_code = !doc.composites.is_empty();
    if let Some(declared) = declared_contains_code {
        if declared != doc.contains_code {
            return Err(ParseError::schema(
                "contains_code",
                format!(
                    "declared contains_code: {declared} but the file {} composites",
                    if doc.contains_code { "has" } else { "has no" }
                ),
            ));
        }
    }
    Ok(doc)
}

/// Serialize a document back to `.dadl` YAML.
pub fn serialize_document(doc: &DadlDocument) -> String {
    // The model only holds YAML-representable values.
    serde_yaml::to_string(doc).expect("document serializes to YAML")
}

fn hint_text(v: &Value, path: &str) -> Result<String, ParseError> {
    match v {
        Value::String(s) => Ok(s.trim().to_string()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(ParseError::schema(path, "hint values must be scalars")),
    }
}

fn yaml_to_json(value: Yaml, path: &str) -> Result<Value, ParseError> {
    Ok(match value {
        Yaml::Null => Value::Null,
        Yaml::Bool(b) => Value::Bool(b),
        Yaml::Number(n) => yaml_number(&n),
        Yaml::String(s) => Value::String(s),
        Yaml::Sequence(items) => Value::Array(
            items
                .into_iter()
                .enumerate()
                .map(|(i, v)| yaml_to_json(v, &format!("{path}[{i}]")))
                .collect::<Result<_, _>>()?,
        ),
        Yaml::Mapping(mapping) => {
            let mut out = Map::new();
            for (k, v) in mapping {
                let key = match k {
                    Yaml::String(s) => s,
                    Yaml::Number(n) => n.to_string(),
                    Yaml::Bool(b) => b.to_string(),
                    other => {
                        return Err(ParseError::schema(
                            path,
                            format!("unsupported mapping key {other:?}"),
                        ))
                    }
                };
                if key.starts_with('_') {
                    continue;
                }
                let child = join(path, &key);
                out.insert(key, yaml_to_json(v, &child)?);
            }
            Value::Object(out)
        }
        Yaml::Tagged(tagged) => {
            return Err(ParseError::schema(
                path,
                format!("custom YAML tag {} is not allowed", tagged.tag),
            ))
        }
    })
}

fn yaml_number(n: &serde_yaml::Number) -> Value {
    if let Some(u) = n.as_u64() {
        Value::Number(u.into())
    } else if let Some(i) = n.as_i64() {
        Value::Number(i.into())
    } else {
        n.as_f64()
            .and_then(Number::from_f64)
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::MY_API;
    use crate::model::types::*;

    #[test]
    fn my_api_parses() {
        let doc = parse_document(MY_API).unwrap();
        assert_eq!(doc.backend.name, "my-api");
        assert_eq!(doc.backend.base_url, "https://api.example.com/v1");
        assert_eq!(doc.tools.len(), 1);
        let tool = &doc.tools["list_items"];
        assert_eq!(tool.method, HttpMethod::Get);
        assert_eq!(tool.path, "/items");
        assert_eq!(tool.access.as_ref().unwrap().as_str(), "read");
        assert_eq!(tool.description, "List all items");
        assert!(!doc.contains_code);
        match doc.auth.as_ref().unwrap() {
            AuthConfig::Bearer(b) => {
                assert_eq!(b.credential.as_str(), "vault/my-api-token");
                assert_eq!(b.header_name, "Authorization");
                assert_eq!(b.prefix, "Bearer ");
            }
            other => panic!("unexpected auth {other:?}"),
        }
    }

    #[test]
    fn underscore_keys_are_dropped() {
        let with = format!("_defaults:\n  anything: [1, 2]\n{MY_API}");
        assert_eq!(parse_document(&with).unwrap(), parse_document(MY_API).unwrap());
    }

    #[test]
    fn tools_as_list_is_schema_error_at_tools() {
        let mutated = MY_API.replace("  list_items:\n", "  - name: list_items\n");
        let err = parse_document(&mutated).unwrap_err();
        assert_eq!(err.path(), Some("tools"), "{err}");
    }

    #[test]
    fn anchors_and_merge_keys_expand() {
        let text = r#"
backend: { name: m, type: rest, base_url: "https://x.test" }
_common: &common
  method: GET
  access: read
tools:
  a:
    <<: *common
    path: /a
  b:
    <<: *common
    path: /b
    access: write
"#;
        let doc = parse_document(text).unwrap();
        assert_eq!(doc.tools["a"].access.as_ref().unwrap().as_str(), "read");
        assert_eq!(doc.tools["b"].access.as_ref().unwrap().as_str(), "write");
        assert_eq!(doc.tools["b"].method, HttpMethod::Get);
    }

    #[test]
    fn custom_tags_rejected() {
        let text = "backend: !custom { name: m }\ntools: {}\n";
        let err = parse_document(text).unwrap_err();
        assert_eq!(err.path(), Some("backend"));
    }

    #[test]
    fn unknown_auth_variant_is_schema_error() {
        let text = MY_API.replace("type: bearer", "type: kerberos");
        let err = parse_document(&text).unwrap_err();
        assert!(matches!(err, ParseError::Schema { .. }), "{err}");
        assert!(err.to_string().contains("kerberos"));
    }

    #[test]
    fn missing_backend_names_path() {
        let err = parse_document("tools: {}\n").unwrap_err();
        assert!(err.to_string().contains("backend"), "{err}");
    }

    #[test]
    fn wrong_type_names_nested_path() {
        let text = MY_API.replace("method: GET", "method: FETCH");
        let err = parse_document(&text).unwrap_err();
        assert_eq!(err.path(), Some("tools.list_items.method"));
    }

    #[test]
    fn malformed_yaml_is_yaml_error() {
        let err = parse_document("backend: [unclosed").unwrap_err();
        assert!(matches!(err, ParseError::Yaml { .. }));
    }

    #[test]
    fn pagination_none_string() {
        let text = r#"
backend: { name: m, type: rest, base_url: "https://x.test" }
defaults:
  pagination: { strategy: offset, request_params: { offset: offset, page_size: limit } }
tools:
  a: { method: GET, path: /a, pagination: none }
"#;
        let doc = parse_document(text).unwrap();
        assert_eq!(doc.tools["a"].pagination, Some(PaginationSetting::Disabled));
    }

    #[test]
    fn composites_set_contains_code() {
        let doc = parse_document(crate::model::fixtures::SMART_PLUGS).unwrap();
        assert!(doc.contains_code);
        let c = &doc.composites["get_named_status"];
        assert_eq!(c.timeout, std::time::Duration::from_secs(30));
        assert_eq!(c.max_api_calls.get(), 50);
    }

    #[test]
    fn serialize_round_trip_for_examples() {
        use crate::model::fixtures::*;
        for text in [MY_API, SMART_PLUGS, HN_STORY] {
            let doc = parse_document(text).unwrap();
            let again = parse_document(&serialize_document(&doc)).unwrap();
            assert_eq!(doc, again);
        }
    }
}
