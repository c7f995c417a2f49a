//! JSONPath subset: root `$`, dot and bracket child access, array index
//! (negative counts from the end) and wildcard. Recursive descent is not
//! supported.

use std::fmt;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid JSONPath `{path}`: {message}")]
pub struct InvalidPath {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Child(String),
    Index(i64),
    Wildcard,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JsonPath {
    source: String,
    segments: Vec<Segment>,
}

/// Result of applying a path with the single/multiple/zero match convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub value: Value,
    pub matches: usize,
    pub warning: Option<String>,
}

impl fmt::Display for JsonPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl JsonPath {
    pub fn parse(text: &str) -> Result<JsonPath, InvalidPath> {
        let err = |message: &str| InvalidPath {
            path: text.to_string(),
            message: message.to_string(),
        };
        let src = text.trim();
        let mut chars = src.char_indices().peekable();
        match chars.next() {
            Some((_, '$')) => {}
            _ => return Err(err("must start with `$`")),
        }
        let mut segments = Vec::new();
        while let Some((_, c)) = chars.next() {
            match c {
                '.' => {
                    if matches!(chars.peek(), Some((_, '.'))) {
                        return Err(err("recursive descent (`..`) is not supported"));
                    }
                    if matches!(chars.peek(), Some((_, '*'))) {
                        chars.next();
                        segments.push(Segment::Wildcard);
                        continue;
                    }
                    let mut name = String::new();
                    while let Some(&(_, c)) = chars.peek() {
                        if c.is_alphanumeric() || c == '_' || c == '-' || c == '$' || c == '@' {
                            name.push(c);
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    if name.is_empty() {
                        return Err(err("expected a member name after `.`"));
                    }
                    segments.push(Segment::Child(name));
                }
                '[' => {
                    let mut inner = String::new();
                    let mut quote: Option<char> = None;
                    let mut closed = false;
                    while let Some((_, c)) = chars.next() {
                        match quote {
                            Some(q) if c == '\\' => {
                                if let Some((_, esc)) = chars.next() {
                                    inner.push(esc);
                                }
                                let _ = q;
                            }
                            Some(q) if c == q => {
                                quote = None;
                                inner.push(c);
                            }
                            Some(_) => inner.push(c),
                            None if c == '\'' || c == '"' => {
                                quote = Some(c);
                                inner.push(c);
                            }
                            None if c == ']' => {
                                closed = true;
                                break;
                            }
                            None => inner.push(c),
                        }
                    }
                    if !closed {
                        return Err(err("unterminated `[`"));
                    }
                    let inner = inner.trim();
                    if inner == "*" {
                        segments.push(Segment::Wildcard);
                    } else if let Some(name) = unquote(inner) {
                        segments.push(Segment::Child(name));
                    } else if let Ok(i) = inner.parse::<i64>() {
                        segments.push(Segment::Index(i));
                    } else if inner.starts_with('?') {
                        return Err(err("filter expressions are not supported"));
                    } else if inner.contains(':') || inner.contains(',') {
                        return Err(err("slices and unions are not supported"));
                    } else {
                        return Err(err("expected an index, quoted name or `*` inside brackets"));
                    }
                }
                c if c.is_whitespace() => {}
                _ => return Err(err("unexpected character")),
            }
        }
        Ok(JsonPath {
            source: src.to_string(),
            segments,
        })
    }

    /// True when the path can match at most one node.
    pub fn is_singular(&self) -> bool {
        !self.segments.contains(&Segment::Wildcard)
    }

    /// All matching nodes in document order.
    pub fn query<'a>(&self, doc: &'a Value) -> Vec<&'a Value> {
        let mut current = vec![doc];
        for seg in &self.segments {
            let mut next = Vec::new();
            for node in current {
                match (seg, node) {
                    (Segment::Child(name), Value::Object(map)) => next.extend(map.get(name)),
                    (Segment::Index(i), Value::Array(items)) => {
                        let idx = if *i < 0 { items.len() as i64 + i } else { *i };
                        if idx >= 0 {
                            next.extend(items.get(idx as usize));
                        }
                    }
                    (Segment::Wildcard, Value::Array(items)) => next.extend(items.iter()),
                    (Segment::Wildcard, Value::Object(map)) => next.extend(map.values()),
                    _ => {}
                }
            }
            current = next;
        }
        current
    }

    /// Single match → that value; several → array; none → null with a warning.
    pub fn extract(&self, doc: &Value) -> Extraction {
        let found = self.query(doc);
        match found.len() {
            0 => Extraction {
                value: Value::Null,
                matches: 0,
                warning: Some(format!("JSONPath `{}` matched nothing", self.source)),
            },
            1 => Extraction {
                value: found[0].clone(),
                matches: 1,
                warning: None,
            },
            n => Extraction {
                value: Value::Array(found.into_iter().cloned().collect()),
                matches: n,
                warning: None,
            },
        }
    }

    /// First match, if any.
    pub fn first<'a>(&self, doc: &'a Value) -> Option<&'a Value> {
        self.query(doc).into_iter().next()
    }
}

fn unquote(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    if s.len() >= 2 && (bytes[0] == b'\'' || bytes[0] == b'"') && bytes[s.len() - 1] == bytes[0] {
        Some(s[1..s.len() - 1].to_string())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn ex(doc: Value, path: &str) -> Extraction {
        JsonPath::parse(path).unwrap().extract(&doc)
    }

    #[test]
    fn unwrap_envelope() {
        assert_eq!(ex(json!({"data": [1, 2]}), "$.data").value, json!([1, 2]));
    }

    #[test]
    fn root_is_identity() {
        let doc = json!({"a": [1, {"b": null}]});
        assert_eq!(ex(doc.clone(), "$").value, doc);
    }

    #[test]
    fn miss_is_null_with_warning() {
        let e = ex(json!({"a": {"b": 1}}), "$.a.c");
        assert_eq!(e.value, Value::Null);
        assert_eq!(e.matches, 0);
        assert!(e.warning.is_some());
    }

    #[test]
    fn brackets_indexes_wildcards() {
        let doc = json!({"items": [{"id": 1}, {"id": 2}], "odd key": 5});
        assert_eq!(ex(doc.clone(), "$['odd key']").value, json!(5));
        assert_eq!(ex(doc.clone(), "$[\"items\"][1].id").value, json!(2));
        assert_eq!(ex(doc.clone(), "$.items[-1].id").value, json!(2));
        assert_eq!(ex(doc.clone(), "$.items[*].id").value, json!([1, 2]));
        assert_eq!(ex(doc, "$.items.*.id").value, json!([1, 2]));
    }

    #[test]
    fn syntax_errors() {
        for bad in ["data", "$..x", "$.", "$[", "$[?(@.a)]", "$[1:2]", "$.a b"] {
            assert!(JsonPath::parse(bad).is_err(), "{bad}");
        }
    }
}
