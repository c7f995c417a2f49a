use std::collections::BTreeMap;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::closure::path_placeholders;
use super::types::*;
use crate::transform::TransformSpec;

/// Per-request timeout when neither the tool nor `defaults` declares one.
pub const DEFAULT_TOOL_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ResolveError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedParam {
    pub kind: Option<String>,
    pub required: bool,
    pub default: Option<Value>,
    pub location: ParamLocation,
    pub description: Option<String>,
    pub allowed: Option<Vec<Value>>,
}

/// One tool with `defaults` merged in and hints folded into its description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedTool {
    pub backend_name: String,
    pub tool_name: String,
    pub method: HttpMethod,
    pub path: String,
    pub base_url: String,
    pub params: BTreeMap<String, ResolvedParam>,
    pub headers: BTreeMap<String, String>,
    pub pagination: Option<PaginationConfig>,
    pub transform: TransformSpec,
    #[serde(with = "super::duration")]
    pub timeout: Duration,
    pub access: Option<AccessLabel>,
    pub description: String,
    pub description_with_hints: String,
    pub error_policy: ErrorPolicy,
    pub rate_limit: Option<RateLimitPolicy>,
    pub auth: Option<AuthConfig>,
}

impl ResolvedTool {
    pub fn expose_paginated(&self) -> bool {
        matches!(&self.pagination, Some(p) if p.behavior == PaginationBehavior::Expose)
    }
}

/// Render a description followed by its hints, keys sorted.
pub(crate) fn description_with_hints(
    description: &str,
    hints: Option<&BTreeMap<String, String>>,
) -> String {
    match hints {
        Some(h) if !h.is_empty() => {
            let mut out = String::from(description);
            out.push_str("\n\nHints:");
            for (k, v) in h {
                out.push_str("\n- ");
                out.push_str(k);
                out.push_str(": ");
                out.push_str(v);
            }
            out
        }
        _ => description.to_string(),
    }
}

pub fn effective_tool(document: &DadlDocument, tool_name: &str) -> Result<ResolvedTool, ResolveError> {
    let tool = document
        .tools
        .get(tool_name)
        .ok_or_else(|| ResolveError::UnknownTool(tool_name.to_string()))?;
    let defaults = document.defaults.clone().unwrap_or_default();

    let pagination = match tool.pagination.as_ref().or(defaults.pagination.as_ref()) {
        Some(PaginationSetting::Enabled(cfg)) => Some(cfg.clone()),
        Some(PaginationSetting::Disabled) | None => None,
    };

    let placeholders = path_placeholders(&tool.path);
    let params = tool
        .params
        .iter()
        .map(|(name, def)| {
            let location = def.location.unwrap_or_else(|| {
                if placeholders.contains(name) {
                    ParamLocation::Path
                } else if tool.method.prefers_query() {
                    ParamLocation::Query
                } else {
                    ParamLocation::Body
                }
            });
            let kind = def.kind.clone().or_else(|| {
                def.schema_ref
                    .as_deref()
                    .and_then(|r| r.strip_prefix("#/types/"))
                    .and_then(|t| document.types.get(t))
                    .and_then(|schema| schema.get("type"))
                    .and_then(Value::as_str)
                    .map(str::to_string)
            });
            let resolved = ResolvedParam {
                kind,
                required: def.required || location == ParamLocation::Path,
                default: def.default.clone(),
                location,
                description: def.description.clone(),
                allowed: def.allowed.clone(),
            };
            (name.clone(), resolved)
        })
        .collect();

    let mut headers = defaults.headers.clone();
    headers.extend(tool.headers.clone());

    let transform = TransformSpec {
        result_path: tool.result_path.clone().or(defaults.result_path.clone()),
        transform: tool.transform.clone().or(defaults.transform.clone()),
        max_items: tool.max_items.or(defaults.max_items).map(|n| n.get() as usize),
        allow_jq_override: tool
            .allow_jq_override
            .or(defaults.allow_jq_override)
            .unwrap_or(false),
    };

    Ok(ResolvedTool {
        backend_name: document.backend.name.clone(),
        tool_name: tool_name.to_string(),
        method: tool.method,
        path: tool.path.clone(),
        base_url: document.backend.base_url.clone(),
        params,
        headers,
        pagination,
        transform,
        timeout: tool.timeout.or(defaults.timeout).unwrap_or(DEFAULT_TOOL_TIMEOUT),
        access: tool.access.clone(),
        description: tool.description.clone(),
        description_with_hints: description_with_hints(
            &tool.description,
            document.hints.get(tool_name),
        ),
        error_policy: document.error_policy.clone().unwrap_or_default(),
        rate_limit: document.rate_limit.clone(),
        auth: document.auth.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::MY_API;
    use crate::model::parse_document;

    const WITH_DEFAULTS: &str = r#"
backend: { name: m, type: rest, base_url: "https://x.test" }
defaults:
  pagination:
    strategy: offset
    request_params: { offset: offset, page_size: limit }
    page_size: 25
  timeout: 10s
  max_items: 100
tools:
  plain: { method: GET, path: /plain }
  off: { method: GET, path: /off, pagination: none }
  custom:
    method: GET
    path: /c
    timeout: 5s
    max_items: 3
    pagination: { strategy: page, request_params: { page: p } }
hints:
  plain:
    requires: "call list_views first to get view_id"
    position_type: float64
    kanban_note: >
      Kanban views return buckets with nested tasks, not a flat list.
"#;

    #[test]
    fn pagination_none_disables_inherited() {
        let doc = parse_document(WITH_DEFAULTS).unwrap();
        assert!(effective_tool(&doc, "off").unwrap().pagination.is_none());
        let plain = effective_tool(&doc, "plain").unwrap();
        assert_eq!(plain.pagination.unwrap().strategy, PaginationStrategy::Offset);
    }

    #[test]
    fn tool_level_overrides_defaults() {
        let doc = parse_document(WITH_DEFAULTS).unwrap();
        let c = effective_tool(&doc, "custom").unwrap();
        assert_eq!(c.timeout, Duration::from_secs(5));
        assert_eq!(c.transform.max_items, Some(3));
        assert_eq!(c.pagination.unwrap().strategy, PaginationStrategy::Page);
        let p = effective_tool(&doc, "plain").unwrap();
        assert_eq!(p.timeout, Duration::from_secs(10));
        assert_eq!(p.transform.max_items, Some(100));
    }

    #[test]
    fn hints_appended_sorted() {
        let doc = parse_document(WITH_DEFAULTS).unwrap();
        let p = effective_tool(&doc, "plain").unwrap();
        assert!(p
            .description_with_hints
            .ends_with("requires: call list_views first to get view_id"));
        assert_eq!(
            p.description_with_hints,
            "\n\nHints:\n- kanban_note: Kanban views return buckets with nested tasks, not a flat list.\n- position_type: float64\n- requires: call list_views first to get view_id"
        );
    }

    #[test]
    fn identity_merge_without_defaults() {
        let doc = parse_document(MY_API).unwrap();
        let t = effective_tool(&doc, "list_items").unwrap();
        assert_eq!(t.description_with_hints, "List all items");
        assert_eq!(t.timeout, DEFAULT_TOOL_TIMEOUT);
        assert!(t.pagination.is_none());
        assert_eq!(t.transform, TransformSpec::default());
        assert_eq!(t.error_policy, ErrorPolicy::default());
        assert_eq!(t.base_url, "https://api.example.com/v1");
    }

    #[test]
    fn unknown_tool() {
        let doc = parse_document(MY_API).unwrap();
        assert_eq!(
            effective_tool(&doc, "nope").unwrap_err(),
            ResolveError::UnknownTool("nope".into())
        );
    }

    #[test]
    fn deterministic() {
        let doc = parse_document(WITH_DEFAULTS).unwrap();
        for name in doc.tools.keys() {
            assert_eq!(effective_tool(&doc, name).unwrap(), effective_tool(&doc, name).unwrap());
        }
    }

    #[test]
    fn adding_a_hint_changes_only_that_description() {
        let doc = parse_document(WITH_DEFAULTS).unwrap();
        let mut hinted = doc.clone();
        hinted
            .hints
            .entry("off".into())
            .or_default()
            .insert("note".into(), "extra".into());
        for name in doc.tools.keys() {
            let before = effective_tool(&doc, name).unwrap();
            let mut after = effective_tool(&hinted, name).unwrap();
            if name == "off" {
                assert_ne!(before.description_with_hints, after.description_with_hints);
                after.description_with_hints = before.description_with_hints.clone();
            }
            assert_eq!(before, after);
        }
    }
}
