use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;
use serde_json::Value;

use super::catalog::{Catalog, CatalogEntry, EntryTarget};
use crate::http::{CURSOR_PARAM, JQ_PARAM};
use crate::model::ResolvedParam;

pub const SIGNATURE_MAX_BYTES: usize = 512;
pub const SIGNATURE_DESCRIPTION_CHARS: usize = 200;

fn ts_type(p: &ResolvedParam) -> String {
    if let Some(allowed) = p.allowed.as_ref().filter(|a| !a.is_empty()) {
        return allowed.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" | ");
    }
    match p.kind.as_deref() {
        Some("string") => "string".into(),
        Some("integer" | "number") => "number".into(),
        Some("boolean") => "boolean".into(),
        Some("array") => "unknown[]".into(),
        Some("object") => "Record<string, unknown>".into(),
        _ => "unknown".into(),
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_' || c == '$')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

fn prop_name(s: &str) -> String {
    if is_ident(s) {
        s.to_string()
    } else {
        Value::String(s.to_string()).to_string()
    }
}

fn comment_safe(s: &str) -> String {
    s.replace("*/", "* /")
}

/// TypeScript object type of a parameter map, including reserved params.
pub fn params_type(entry: &CatalogEntry) -> String {
    let mut fields: Vec<String> = entry
        .params
        .iter()
        .map(|(name, p)| {
            let opt = if p.required { "" } else { "?" };
            format!("{}{opt}: {}", prop_name(name), ts_type(p))
        })
        .collect();
    if entry.expose_cursor {
        fields.push(format!("{CURSOR_PARAM}?: string"));
    }
    if entry.allow_jq {
        fields.push(format!("{JQ_PARAM}?: string"));
    }
    if fields.is_empty() {
        "{}".into()
    } else {
        format!("{{ {} }}", fields.join("; "))
    }
}

fn result_type(entry: &CatalogEntry) -> &'static str {
    if entry.expose_cursor {
        "Promise<{ items: unknown; next_cursor: string | null }>"
    } else {
        "Promise<unknown>"
    }
}

/// The method declaration of one entry: doc comment, then the signature line.
pub fn method_text(entry: &CatalogEntry) -> String {
    let mut out = String::from("/**\n");
    let description = if entry.description.trim().is_empty() { entry.qualified.as_str() } else { entry.description.trim() };
    for line in description.lines() {
        let _ = writeln!(out, " * {}", comment_safe(line).trim_end());
    }
    let access = entry.access.as_ref().map_or("unlabeled", |a| a.as_str());
    let _ = writeln!(out, " * @access {access}");
    match &entry.target {
        EntryTarget::Tool(t) => {
            let _ = writeln!(out, " * @http {} {}", t.method.as_str(), t.path);
        }
        EntryTarget::Composite(_) => out.push_str(" * @composite\n"),
    }
    for (name, p) in &entry.params {
        if let Some(d) = p.description.as_deref().filter(|d| !d.trim().is_empty()) {
            let _ = writeln!(out, " * @param params.{name} {}", comment_safe(d.lines().next().unwrap_or("")).trim());
        }
        if let Some(default) = &p.default {
            let _ = writeln!(out, " * @default params.{name} {default}");
        }
    }
    out.push_str(" */\n");
    let _ = writeln!(out, "{}(params: {}): {};", prop_name(&entry.name), params_type(entry), result_type(entry));
    out
}

fn indent(text: &str, prefix: &str) -> String {
    text.lines().map(|l| format!("{prefix}{l}\n")).collect()
}

/// The full interface text for the `execute` sandbox. Tools with a unique name are
/// methods of `api`; the others live under their backend.
pub fn generate_interface(catalog: &Catalog) -> String {
    let mut out = String::from("// Generated from the loaded DADL catalog.\ndeclare const api: Api;\n\ninterface Api {\n");
    let mut nested: BTreeMap<&str, Vec<&CatalogEntry>> = BTreeMap::new();
    for e in catalog.entries() {
        if e.address == e.qualified {
            nested.entry(e.backend.as_str()).or_default().push(e);
        } else {
            out.push_str(&indent(&e.interface, "  "));
        }
    }
    for (backend, entries) in nested {
        let _ = writeln!(out, "  {}: {{", prop_name(backend));
        for e in entries {
            out.push_str(&indent(&e.interface, "    "));
        }
        out.push_str("  };\n");
    }
    out.push_str("}\n");
    out
}

/// Script expression for an address, e.g. `api.list_items` or `api["my-api"].list_items`.
pub fn call_path(address: &str) -> String {
    address.split('.').fold(String::from("api"), |mut acc, part| {
        if is_ident(part) {
            acc.push('.');
            acc.push_str(part);
        } else {
            let _ = write!(acc, "[{}]", Value::String(part.to_string()));
        }
        acc
    })
}

/// Compact description of one tool returned by `search`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolSignature {
    /// How a script calls it: `api.<name>(...)`.
    pub name: String,
    pub qualified_name: String,
    pub backend: String,
    pub access: Option<String>,
    pub description: String,
    pub params: String,
    pub composite: bool,
    /// The entry's TypeScript declaration.
    pub interface: String,
}

fn one_line(s: &str, max_chars: usize) -> String {
    let flat: String = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= max_chars {
        flat
    } else {
        let mut cut: String = flat.chars().take(max_chars.saturating_sub(3)).collect();
        cut.push_str("...");
        cut
    }
}

fn truncate_bytes(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let mut end = max.saturating_sub(3);
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &s[..end])
}

impl ToolSignature {
    pub fn of(entry: &CatalogEntry) -> ToolSignature {
        let params = entry
            .params
            .iter()
            .map(|(n, p)| format!("{n}{}: {}", if p.required { "" } else { "?" }, ts_type(p)))
            .collect::<Vec<_>>()
            .join(", ");
        ToolSignature {
            name: entry.address.clone(),
            qualified_name: entry.qualified.clone(),
            backend: entry.backend.clone(),
            access: entry.access.as_ref().map(|a| a.as_str().to_string()),
            description: one_line(&entry.description, SIGNATURE_DESCRIPTION_CHARS),
            params: truncate_bytes(&params, 200),
            composite: entry.is_composite(),
            interface: entry.interface.clone(),
        }
    }

    /// One-line form, at most 512 bytes.
    pub fn render(&self) -> String {
        let access = self.access.as_deref().unwrap_or("unlabeled");
        let line = format!("{}({{{}}}) [{access}] {}", call_path(&self.name), self.params, self.description);
        truncate_bytes(&line, SIGNATURE_MAX_BYTES)
    }
}
