use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::Value;
use url::Url;

use super::closure::{composite_references, path_placeholders};
use super::types::*;
use crate::sandbox;
use crate::transform::{jq, JsonPath};

/// Payload size above which an endpoint should declare a `transform`.
pub const LARGE_ITEM_BYTES: usize = 5 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    /// YAML path the finding refers to.
    pub path: String,
    /// Stable machine-readable identifier.
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_error(&self, code: &str) -> bool {
        self.errors.iter().any(|f| f.code == code)
    }

    pub fn has_warning(&self, code: &str) -> bool {
        self.warnings.iter().any(|f| f.code == code)
    }

    fn error(&mut self, path: impl Into<String>, code: &'static str, message: impl Into<String>) {
        self.errors.push(Finding {
            path: path.into(),
            code,
            message: message.into(),
        });
    }

    fn warn(&mut self, path: impl Into<String>, code: &'static str, message: impl Into<String>) {
        self.warnings.push(Finding {
            path: path.into(),
            code,
            message: message.into(),
        });
    }
}

/// Tool and composite names: `[a-z][a-z0-9_]*`.
pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

const SECRETISH_KEYS: [&str; 6] = ["password", "passwd", "secret", "token", "api_key", "apikey"];

pub fn validate(document: &DadlDocument) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_backend(document, &mut report);
    check_auth(document, &mut report);
    check_defaults(document, &mut report);
    for (name, tool) in &document.tools {
        check_tool(document, name, tool, &mut report);
    }
    for (name, composite) in &document.composites {
        check_composite(document, name, composite, &mut report);
    }
    check_hints(document, &mut report);
    check_coverage(document, &mut report);
    check_error_policy(document, &mut report);
    report
}

fn check_backend(doc: &DadlDocument, r: &mut ValidationReport) {
    match Url::parse(&doc.backend.base_url) {
        Ok(url) if matches!(url.scheme(), "http" | "https") && url.query().is_none() && url.host().is_some() => {}
        Ok(_) => r.error(
            "backend.base_url",
            "invalid_base_url",
            "base_url must be an absolute http(s) URL without a query string",
        ),
        Err(e) => r.error("backend.base_url", "invalid_base_url", format!("base_url does not parse: {e}")),
    }
    if doc.backend.name.trim().is_empty() {
        r.error("backend.name", "invalid_name", "backend name must not be empty");
    }
}

fn check_credential(path: &str, cred: &CredentialRef, r: &mut ValidationReport) {
    if !cred.is_well_formed() {
        // Do not echo the value: it may be a real secret.
        r.error(
            path,
            "literal_credential",
            "literal credential suspected: references must look like `namespace/key`",
        );
    }
}

fn check_auth(doc: &DadlDocument, r: &mut ValidationReport) {
    let Some(auth) = &doc.auth else { return };
    for (path, cred) in auth.credential_refs() {
        check_credential(&path, cred, r);
    }
    match auth {
        AuthConfig::OAuth2ClientCredentials(o) => {
            if !Url::parse(&o.token_url).is_ok_and(|u| matches!(u.scheme(), "http" | "https")) {
                r.error("auth.token_url", "invalid_token_url", "token_url must be an absolute http(s) URL");
            }
        }
        AuthConfig::Session(s) => {
            if let Err(e) = JsonPath::parse(&s.token_extract) {
                r.error("auth.token_extract", "invalid_jsonpath", e.to_string());
            }
            for (key, value) in &s.login.body {
                let lowered = key.to_ascii_lowercase();
                if matches!(value, TemplateValue::Literal(Value::String(_)))
                    && SECRETISH_KEYS.iter().any(|k| lowered.contains(k))
                {
                    r.error(
                        format!("auth.login.body.{key}"),
                        "literal_credential",
                        "literal credential suspected: use `{ credential: namespace/key }`",
                    );
                }
            }
        }
        _ => {}
    }
}

fn check_pagination(path: &str, p: &PaginationSetting, r: &mut ValidationReport) {
    let PaginationSetting::Enabled(cfg) = p else { return };
    for role in cfg.missing_roles() {
        r.error(
            format!("{path}.{role}"),
            "pagination_roles",
            format!("{} pagination requires {role}", cfg.strategy.as_str()),
        );
    }
    let paths = [
        ("response_paths.next_cursor", &cfg.response_paths.next_cursor),
        ("response_paths.items", &cfg.response_paths.items),
        ("response_paths.total", &cfg.response_paths.total),
    ];
    for (role, p) in paths {
        if let Some(p) = p {
            if let Err(e) = JsonPath::parse(p) {
                r.error(format!("{path}.{role}"), "invalid_jsonpath", e.to_string());
            }
        }
    }
}

fn check_transform_fields(
    path: &str,
    result_path: Option<&String>,
    transform: Option<&String>,
    r: &mut ValidationReport,
) {
    if let Some(p) = result_path {
        if let Err(e) = JsonPath::parse(p) {
            r.error(format!("{path}.result_path"), "invalid_jsonpath", e.to_string());
        }
    }
    if let Some(t) = transform {
        if let Err(e) = jq::Filter::parse(t) {
            r.error(format!("{path}.transform"), "invalid_jq", e.to_string());
        }
    }
}

fn check_defaults(doc: &DadlDocument, r: &mut ValidationReport) {
    let Some(d) = &doc.defaults else { return };
    if let Some(p) = &d.pagination {
        check_pagination("defaults.pagination", p, r);
    }
    check_transform_fields("defaults", d.result_path.as_ref(), d.transform.as_ref(), r);
}

fn check_param_refs(doc: &DadlDocument, path: &str, params: &std::collections::BTreeMap<String, ParamDef>, r: &mut ValidationReport) {
    for (pname, def) in params {
        if let Some(reference) = &def.schema_ref {
            let resolved = reference
                .strip_prefix("#/types/")
                .is_some_and(|t| doc.types.contains_key(t));
            if !resolved {
                r.error(
                    format!("{path}.params.{pname}.$ref"),
                    "unresolved_ref",
                    format!("`{reference}` does not name an entry of `types`"),
                );
            }
        }
    }
}

fn check_tool(doc: &DadlDocument, name: &str, tool: &ToolDef, r: &mut ValidationReport) {
    let path = format!("tools.{name}");
    if !is_valid_name(name) {
        r.error(&path, "invalid_name", format!("tool name `{name}` must match [a-z][a-z0-9_]*"));
    }
    if !tool.path.starts_with('/') {
        r.error(format!("{path}.path"), "invalid_path", "path must start with `/`");
    }

    let placeholders: BTreeSet<String> = path_placeholders(&tool.path).into_iter().collect();
    for ph in &placeholders {
        match tool.params.get(ph) {
            None => r.error(
                format!("{path}.path"),
                "placeholder_without_param",
                format!("placeholder `{{{ph}}}` has no matching param"),
            ),
            Some(def) if def.location.is_some_and(|l| l != ParamLocation::Path) => r.error(
                format!("{path}.params.{ph}.location"),
                "placeholder_without_param",
                format!("placeholder `{{{ph}}}` is bound to a non-path param"),
            ),
            Some(_) => {}
        }
    }
    for (pname, def) in &tool.params {
        if def.location == Some(ParamLocation::Path) && !placeholders.contains(pname) {
            r.error(
                format!("{path}.params.{pname}"),
                "param_without_placeholder",
                format!("path param `{pname}` does not appear in `{}`", tool.path),
            );
        }
        if pname.starts_with('_') {
            r.error(format!("{path}.params.{pname}"), "reserved_param", "params beginning with `_` are reserved");
        }
    }
    check_param_refs(doc, &path, &tool.params, r);

    if let Some(p) = &tool.pagination {
        check_pagination(&format!("{path}.pagination"), p, r);
    }
    check_transform_fields(&path, tool.result_path.as_ref(), tool.transform.as_ref(), r);

    if tool.access.is_none() {
        r.warn(
            format!("{path}.access"),
            "missing_access",
            "no access label; unlabeled tools are denied under non-wildcard policies",
        );
    }

    let has_transform = tool.transform.is_some()
        || doc.defaults.as_ref().is_some_and(|d| d.transform.is_some());
    if !has_transform {
        if let Some(bytes) = largest_example_item(tool) {
            if bytes > LARGE_ITEM_BYTES {
                r.warn(
                    format!("{path}.transform"),
                    "large_untransformed",
                    format!("example items reach {bytes} bytes; define a transform for payloads over 5 KB per item"),
                );
            }
        }
    }
}

/// Largest serialized item across a tool's example responses.
fn largest_example_item(tool: &ToolDef) -> Option<usize> {
    tool.examples
        .iter()
        .filter_map(|e| e.response.as_ref())
        .map(|resp| {
            let payload = tool
                .result_path
                .as_deref()
                .and_then(|p| JsonPath::parse(p).ok())
                .map(|p| p.extract(resp).value)
                .unwrap_or_else(|| resp.clone());
            match &payload {
                Value::Array(items) => items.iter().map(|i| i.to_string().len()).max().unwrap_or(0),
                other => other.to_string().len(),
            }
        })
        .max()
}

fn check_composite(doc: &DadlDocument, name: &str, c: &CompositeDef, r: &mut ValidationReport) {
    let path = format!("composites.{name}");
    if !is_valid_name(name) {
        r.error(&path, "invalid_name", format!("composite name `{name}` must match [a-z][a-z0-9_]*"));
    }
    if doc.tools.contains_key(name) {
        r.error(&path, "name_collision", format!("`{name}` is both a tool and a composite"));
    }
    if c.timeout > COMPOSITE_MAX_TIMEOUT {
        r.error(
            format!("{path}.timeout"),
            "composite_timeout",
            format!(
                "composite timeout {}s exceeds the maximum of 120s",
                c.timeout.as_secs()
            ),
        );
    }
    if c.code.trim().is_empty() {
        r.error(format!("{path}.code"), "empty_code", "composite code must not be empty");
        return;
    }
    for v in sandbox::static_check(&c.code) {
        r.error(
            format!("{path}.code"),
            "sandbox_violation",
            format!("forbidden token `{}` at line {}", v.token, v.line),
        );
    }
    if let Err(e) = sandbox::parse_script(&c.code) {
        r.error(format!("{path}.code"), "script_syntax", e.to_string());
    }
    for reference in composite_references(&c.code) {
        if !doc.tools.contains_key(&reference) {
            let why = if doc.composites.contains_key(&reference) {
                "composites may not call other composites"
            } else {
                "no such tool in this file"
            };
            r.error(
                format!("{path}.code"),
                "closure_violation",
                format!("references `api.{reference}`: {why}"),
            );
        }
    }
    check_param_refs(doc, &path, &c.params, r);
    if c.access.is_none() {
        r.warn(format!("{path}.access"), "missing_access", "composite has no access label");
    }
}

fn check_hints(doc: &DadlDocument, r: &mut ValidationReport) {
    for tool in doc.hints.keys() {
        if !doc.tools.contains_key(tool) {
            r.warn(format!("hints.{tool}"), "unknown_hint_target", format!("hints for unknown tool `{tool}`"));
        }
    }
}

fn check_coverage(doc: &DadlDocument, r: &mut ValidationReport) {
    let Some(c) = &doc.coverage else { return };
    if let (Some(defined), Some(total)) = (c.tools_defined, c.estimated_total) {
        if defined > total {
            r.warn("coverage.tools_defined", "coverage_mismatch", "tools_defined exceeds estimated_total");
        }
        if let Some(percent) = c.percent {
            if total > 0 {
                let expected = 100.0 * defined as f64 / total as f64;
                if (percent - expected).abs() > 1.0 {
                    r.warn(
                        "coverage.percent",
                        "coverage_mismatch",
                        format!("percent {percent} differs from {expected:.1} by more than 1"),
                    );
                }
            }
        }
    }
    if let Some(defined) = c.tools_defined {
        if defined != doc.tools.len() as u64 {
            r.warn(
                "coverage.tools_defined",
                "coverage_count",
                format!("declares {defined} tools but the file defines {}", doc.tools.len()),
            );
        }
    }
}

fn check_error_policy(doc: &DadlDocument, r: &mut ValidationReport) {
    let Some(p) = &doc.error_policy else { return };
    let overlap: Vec<_> = p.terminal_statuses.intersection(&p.retryable_statuses).collect();
    if !overlap.is_empty() {
        r.error(
            "error_policy",
            "status_overlap",
            format!("statuses {overlap:?} are both terminal and retryable"),
        );
    }
    if p.retry.max_attempts < 1 {
        r.error("error_policy.retry.max_attempts", "retry_policy", "max_attempts must be at least 1");
    }
    if !(p.retry.multiplier >= 1.0) {
        r.error("error_policy.retry.multiplier", "retry_policy", "multiplier must be at least 1");
    }
    if let Err(e) = JsonPath::parse(&p.message_path) {
        r.error("error_policy.message_path", "invalid_jsonpath", e.to_string());
    }
    if let Some(code_path) = &p.code_path {
        if let Err(e) = JsonPath::parse(code_path) {
            r.error("error_policy.code_path", "invalid_jsonpath", e.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::parse_document;

    fn report(text: &str) -> ValidationReport {
        validate(&parse_document(text).unwrap())
    }

    #[test]
    fn examples_are_clean() {
        for text in [MY_API, SMART_PLUGS, HN_STORY] {
            let r = report(text);
            assert!(r.errors.is_empty(), "{:?}", r.errors);
            assert!(r.warnings.is_empty(), "{:?}", r.warnings);
        }
    }

    #[test]
    fn raw_token_is_literal_credential() {
        let r = report(&MY_API.replace("vault/my-api-token", "\"sk_live_abc123\""));
        let f = r.errors.iter().find(|f| f.code == "literal_credential").unwrap();
        assert_eq!(f.path, "auth.credential");
        assert!(f.message.contains("literal credential suspected"));
        assert!(!f.message.contains("sk_live_abc123"));
    }

    #[test]
    fn composite_timeout_bound() {
        let r = report(&SMART_PLUGS.replace("timeout: 30s", "timeout: 150s"));
        let f = r.errors.iter().find(|f| f.code == "composite_timeout").unwrap();
        assert!(f.message.contains("120s"));
        assert!(report(&SMART_PLUGS.replace("timeout: 30s", "timeout: 120s")).is_ok());
    }

    #[test]
    fn placeholder_mismatch() {
        let r = report(&MY_API.replace("path: /items", "path: /items/{id}"));
        assert!(r.has_error("placeholder_without_param"));
        let text = MY_API.replace(
            "description: \"List all items\"",
            "description: x\n    params:\n      id: { type: string, location: path }",
        );
        assert!(report(&text).has_error("param_without_placeholder"));
    }

    #[test]
    fn status_overlap() {
        let text = format!("{MY_API}\nerror_policy:\n  terminal_statuses: [404, 500]\n  retryable_statuses: [500]\n");
        assert!(report(&text).has_error("status_overlap"));
    }

    #[test]
    fn missing_access_warns() {
        let r = report(&MY_API.replace("    access: read\n", ""));
        assert!(r.is_ok());
        assert!(r.has_warning("missing_access"));
    }

    #[test]
    fn coverage_percent_mismatch_warns() {
        let text = format!("{MY_API}\ncoverage: {{ tools_defined: 1, estimated_total: 4, percent: 50 }}\n");
        assert!(report(&text).has_warning("coverage_mismatch"));
        let text = format!("{MY_API}\ncoverage: {{ tools_defined: 1, estimated_total: 4, percent: 25 }}\n");
        assert!(report(&text).warnings.is_empty());
    }

    #[test]
    fn large_example_without_transform_warns() {
        let big = "x".repeat(6000);
        let text = format!(
            "{MY_API}    examples:\n      - params: {{}}\n        response: [{{ \"body\": \"{big}\" }}]\n"
        );
        assert!(report(&text).has_warning("large_untransformed"));
        let small = format!(
            "{MY_API}    examples:\n      - params: {{}}\n        response: [{{ \"body\": \"short\" }}]\n"
        );
        assert!(!report(&small).has_warning("large_untransformed"));
    }

    #[test]
    fn sandbox_tokens_in_composites_are_errors() {
        let r = report(&SMART_PLUGS.replace("return params.only_on", "eval(\"1\"); return params.only_on"));
        assert!(r.has_error("sandbox_violation"));
    }

    #[test]
    fn composite_calling_composite_is_closure_violation() {
        let r = report(&SMART_PLUGS.replace("api.list_devices()", "api.get_named_status()"));
        assert!(r.has_error("closure_violation"));
    }

    #[test]
    fn bad_names() {
        assert!(is_valid_name("list_items2"));
        assert!(!is_valid_name("List"));
        assert!(!is_valid_name("2x"));
        assert!(!is_valid_name(""));
        assert!(!is_valid_name("a-b"));
        assert!(report(&MY_API.replace("list_items:", "ListItems:")).has_error("invalid_name"));
    }

    #[test]
    fn base_url_with_query_rejected() {
        let r = report(&MY_API.replace("https://api.example.com/v1", "https://api.example.com/v1?x=1"));
        assert!(r.has_error("invalid_base_url"));
    }

    #[test]
    fn invalid_transform_is_reported() {
        let text = MY_API.replace("access: read", "access: read\n    transform: \"map(\"");
        assert!(report(&text).has_error("invalid_jq"));
    }

    #[test]
    fn pagination_missing_roles() {
        let text = MY_API.replace(
            "access: read",
            "access: read\n    pagination: { strategy: cursor, request_params: { cursor: after } }",
        );
        assert!(report(&text).has_error("pagination_roles"));
    }
}
