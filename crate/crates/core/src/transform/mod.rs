//! Response shaping: result_path → transform → max_items → caller override.

pub mod jq;
mod jsonpath;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use jsonpath::{Extraction, InvalidPath, JsonPath};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_items: Option<usize>,
    #[serde(default)]
    pub allow_jq_override: bool,
}

impl TransformSpec {
    pub fn is_identity(&self) -> bool {
        self.result_path.is_none() && self.transform.is_none() && self.max_items.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error(transparent)]
    InvalidPath(#[from] InvalidPath),
    #[error(transparent)]
    Jq(#[from] jq::JqError),
    #[error("this tool does not accept a per-call jq filter (allow_jq_override is false)")]
    OverrideForbidden,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub value: Value,
    pub truncated: bool,
    pub warnings: Vec<String>,
    pub input_bytes: usize,
    pub output_bytes: usize,
}

pub fn json_size(v: &Value) -> usize {
    serde_json::to_vec(v).map(|b| b.len()).unwrap_or(0)
}

pub fn extract_result_path(doc: &Value, path: &str) -> Result<Extraction, InvalidPath> {
    Ok(JsonPath::parse(path)?.extract(doc))
}

pub fn apply_jq(doc: &Value, filter: &str) -> Result<Value, jq::JqError> {
    jq::Filter::parse(filter)?.apply(doc)
}

pub fn truncate_items(doc: Value, max: usize) -> (Value, bool) {
    match doc {
        Value::Array(mut items) if items.len() > max => {
            items.truncate(max);
            (Value::Array(items), true)
        }
        other => (other, false),
    }
}

pub fn run_pipeline(
    doc: &Value,
    spec: &TransformSpec,
    override_filter: Option<&str>,
) -> Result<PipelineOutput, TransformError> {
    if override_filter.is_some() && !spec.allow_jq_override {
        return Err(TransformError::OverrideForbidden);
    }
    let input_bytes = json_size(doc);
    let mut warnings = Vec::new();
    let mut value = match &spec.result_path {
        Some(p) => {
            let e = extract_result_path(doc, p)?;
            warnings.extend(e.warning);
            e.value
        }
        None => doc.clone(),
    };
    if let Some(f) = &spec.transform {
        value = apply_jq(&value, f)?;
    }
    let mut truncated = false;
    if let Some(max) = spec.max_items {
        (value, truncated) = truncate_items(value, max);
    }
    if let Some(f) = override_filter {
        value = apply_jq(&value, f)?;
    }
    Ok(PipelineOutput {
        output_bytes: json_size(&value),
        value,
        truncated,
        warnings,
        input_bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn truncation_cases() {
        assert_eq!(truncate_items(json!([1, 2, 3, 4, 5, 6, 7, 8, 9, 10]), 3), (json!([1, 2, 3]), true));
        assert_eq!(truncate_items(json!([1, 2]), 5), (json!([1, 2]), false));
        assert_eq!(truncate_items(json!({"a": 1}), 1), (json!({"a": 1}), false));
    }

    #[test]
    fn envelope_then_truncate() {
        let spec = TransformSpec {
            result_path: Some("$.data".into()),
            max_items: Some(4),
            ..Default::default()
        };
        let out = run_pipeline(&json!({"data": [1, 2, 3, 4, 5, 6]}), &spec, None).unwrap();
        assert_eq!(out.value, json!([1, 2, 3, 4]));
        assert!(out.truncated);
    }

    #[test]
    fn empty_spec_is_identity() {
        let doc = json!({"x": [1, {"y": null}]});
        let out = run_pipeline(&doc, &TransformSpec::default(), None).unwrap();
        assert_eq!(out.value, doc);
        assert!(!out.truncated);
        assert_eq!(out.input_bytes, out.output_bytes);
    }

    #[test]
    fn override_needs_permission() {
        let spec = TransformSpec::default();
        assert_eq!(
            run_pipeline(&json!([1]), &spec, Some(".[0]")),
            Err(TransformError::OverrideForbidden)
        );
        let allowed = TransformSpec { allow_jq_override: true, ..Default::default() };
        assert_eq!(run_pipeline(&json!([7]), &allowed, Some(".[0]")).unwrap().value, json!(7));
    }

    #[test]
    fn miss_warns_not_errors() {
        let spec = TransformSpec { result_path: Some("$.nope".into()), ..Default::default() };
        let out = run_pipeline(&json!({}), &spec, None).unwrap();
        assert_eq!(out.value, Value::Null);
        assert_eq!(out.warnings.len(), 1);
    }
}
