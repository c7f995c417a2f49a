use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;

use super::types::{AuthConfig, DadlDocument, HttpMethod};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct EndpointEntry {
    pub method: HttpMethod,
    pub path_template: String,
    pub tool_names: BTreeSet<String>,
}

/// Every (method, path template) a document can reach, found without running anything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EndpointSurface {
    pub entries: Vec<EndpointEntry>,
    pub includes_composites: bool,
    pub composite_reachable: BTreeMap<String, BTreeSet<String>>,
    /// Login and token endpoints used by the auth scheme, outside the tool surface.
    pub auth_endpoints: Vec<String>,
}

impl EndpointSurface {
    pub fn contains(&self, method: HttpMethod, path_template: &str) -> bool {
        self.entries
            .iter()
            .any(|e| e.method == method && e.path_template == path_template)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("composite `{composite}` references `{reference}`, which is not a primitive tool of this document")]
pub struct ClosureViolation {
    pub composite: String,
    pub reference: String,
}

fn api_call_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bapi\s*\.\s*([A-Za-z_$][A-Za-z0-9_$]*)\s*\(").unwrap())
}

fn placeholder_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([^{}/]*)\}").unwrap())
}

/// Names of `{placeholder}`s in a path template, in order of appearance.
pub fn path_placeholders(path: &str) -> Vec<String> {
    placeholder_pattern()
        .captures_iter(path)
        .map(|c| c[1].to_string())
        .collect()
}

/// Identifiers referenced as `api.IDENT(` anywhere in the text. String
/// literals are scanned too, so this over-approximates.
pub fn composite_references(code: &str) -> BTreeSet<String> {
    api_call_pattern()
        .captures_iter(code)
        .map(|c| c[1].to_string())
        .collect()
}

pub fn static_closure(document: &DadlDocument) -> Result<EndpointSurface, Vec<ClosureViolation>> {
    let mut by_endpoint: BTreeMap<(HttpMethod, String), BTreeSet<String>> = BTreeMap::new();
    for (name, tool) in &document.tools {
        by_endpoint
            .entry((tool.method, tool.path.clone()))
            .or_default()
            .insert(name.clone());
    }
    let entries = by_endpoint
        .into_iter()
        .map(|((method, path_template), tool_names)| EndpointEntry {
            method,
            path_template,
            tool_names,
        })
        .collect();

    let mut violations = Vec::new();
    let mut composite_reachable = BTreeMap::new();
    for (name, composite) in &document.composites {
        let refs = composite_references(&composite.code);
        for r in &refs {
            if !document.tools.contains_key(r) {
                violations.push(ClosureViolation {
                    composite: name.clone(),
                    reference: r.clone(),
                });
            }
        }
        composite_reachable.insert(name.clone(), refs);
    }
    if !violations.is_empty() {
        return Err(violations);
    }

    let auth_endpoints = match &document.auth {
        Some(AuthConfig::OAuth2ClientCredentials(o)) => vec![format!("POST {}", o.token_url)],
        Some(AuthConfig::Session(s)) => vec![format!("{} {}", s.login.method, s.login.path)],
        _ => Vec::new(),
    };

    Ok(EndpointSurface {
        entries,
        includes_composites: !document.composites.is_empty(),
        composite_reachable,
        auth_endpoints,
    })
}
