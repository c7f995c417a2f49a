use serde::Serialize;
use serde_json::{json, Map, Value};

use super::catalog::{Catalog, CatalogEntry};
use super::interface::generate_interface;
use crate::http::{CURSOR_PARAM, JQ_PARAM};
use crate::model::duration;
use crate::sandbox::SandboxLimits;

/// Gateway settings that shape what clients see.
#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub limits: SandboxLimits,
    /// Also list every catalog entry as its own protocol tool.
    pub expose_native: bool,
    /// Accept `jq_override` on `execute`.
    pub allow_result_jq: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig { limits: SandboxLimits::default(), expose_native: false, allow_result_jq: true }
    }
}

pub const INSTRUCTIONS: &str = "\
This server gives you access to a library of REST APIs described in DADL files. \
The library can be large, so individual API operations are not listed as tools. \
Instead there are two tools. Use `search` to find operations by keyword: it returns \
matching tool signatures with a one-line description, a parameter summary, the access \
label and the TypeScript declaration of each match. Then use `execute` to run a short \
JavaScript program that calls those operations as `await api.<tool>({...})` and returns \
the answer. Filtering, joining and reshaping belong inside the program, so a single \
`execute` can replace many round trips and only the final value comes back to you.\n\n\
Every `api.*` call is checked against your roles and the tool's access label before any \
request leaves the runtime, and every call is audited. A denied call throws an error you \
can catch; it does not abort the program unless you let it propagate. Credentials are \
handled by the runtime and are never visible to scripts. Search again whenever you need \
an operation you have not seen yet; do not guess tool names or parameters.\n\n\
Tool names are unique across the library unless two backends define the same name; \
those are qualified with their backend and called as `api[\"backend\"].tool(...)`. \
Example: to find unassigned open bugs, search for \"list issues\", then execute:\n\
const issues = await api.list_repository_issues({ owner: \"acme\", repo: \"web\", state: \"open\", labels: \"bug\" });\n\
return issues.filter(i => !i.assignee).map(i => ({ number: i.number, title: i.title, url: i.html_url }));\n\
Prefer returning only the fields the user needs. Large results are truncated by the runtime.";

fn search_tool() -> Value {
    json!({
        "name": "search",
        "description": "Search the tool library by keyword. Matches tool names (weighted highest), \
descriptions including usage hints, and backend names. Returns up to k signatures ordered by relevance. \
Each result has `name` (call it as api.<name>, or api[\"backend\"].<tool> when the name is qualified), \
`backend`, `access` (read, write, admin, dangerous or a custom label), `description`, `params` \
(`?` marks optional parameters) and `interface`, the TypeScript declaration used inside `execute`. \
Use short, specific queries such as \"list issues\" or \"device status\". An empty result means \
no tool matched; try synonyms or the backend name.",
        "inputSchema": {
            "type": "object",
            "properties": {
                "query": { "type": "string", "description": "Keywords describing the operation you need." },
                "k": {
                    "type": "integer",
                    "minimum": 1,
                    "maximum": super::search::MAX_K,
                    "default": super::search::DEFAULT_K,
                    "description": "Maximum number of results."
                }
            },
            "required": ["query"],
            "additionalProperties": false
        }
    })
}

fn execute_tool(config: &GatewayConfig) -> Value {
    let limits = &config.limits;
    let description = format!(
        "Run a JavaScript program against the tool library and return its result. The program is \
the body of an async function: use `await api.<tool>({{ ...params }})` for each operation found \
with `search`, then `return` a JSON-serializable value. Supported: const/let, arrow functions, \
destructuring, spread, template literals, optional chaining, for-of loops, try/catch, \
Promise.all, and the usual Array, Object, String, Math and JSON helpers. Not available: network \
or file access, fetch, require, import, eval, the Function constructor, timers and globals such \
as process. Limits per run: {} wall-clock time, {} api calls, {} bytes of result. Paginated tools \
normally return all items; tools whose declaration accepts `{CURSOR_PARAM}` return \
{{ items, next_cursor }} and take the cursor back to fetch the next page. Tools that accept \
`{JQ_PARAM}` apply that jq filter to their own response. A failed api call throws an Error whose \
message names the reason (denied, invalid params, upstream status). `console.log` output is \
returned alongside the result for debugging.",
        duration::render(limits.timeout),
        limits.max_api_calls,
        limits.max_output_bytes,
    );
    let mut properties = Map::new();
    properties.insert(
        "script".into(),
        json!({ "type": "string", "description": "JavaScript program body; the value it returns is the tool result." }),
    );
    if config.allow_result_jq {
        properties.insert(
            "jq_override".into(),
            json!({ "type": "string", "description": "Optional jq filter applied to the returned value, e.g. `map({id, name})`." }),
        );
    }
    json!({
        "name": "execute",
        "description": description,
        "inputSchema": {
            "type": "object",
            "properties": properties,
            "required": ["script"],
            "additionalProperties": false
        }
    })
}

/// The two meta-tools as listed to clients.
pub fn meta_tools(config: &GatewayConfig) -> Vec<Value> {
    vec![search_tool(), execute_tool(config)]
}

/// Everything a client sees before calling any tool. Depends on `config` only.
pub fn advertisement_surface(config: &GatewayConfig) -> String {
    let tools = serde_json::to_string(&meta_tools(config)).expect("static json");
    format!("{INSTRUCTIONS}\n\n{tools}")
}

/// JSON Schema of an entry's parameters, as a conventional per-tool registration would carry.
pub fn input_schema(entry: &CatalogEntry) -> Value {
    let mut properties = Map::new();
    let mut required = Vec::new();
    for (name, p) in &entry.params {
        let mut prop = Map::new();
        let kind = match p.kind.as_deref() {
            Some(k @ ("string" | "integer" | "number" | "boolean" | "array" | "object")) => Some(k),
            _ => None,
        };
        if let Some(k) = kind {
            prop.insert("type".into(), json!(k));
        }
        if let Some(d) = &p.description {
            prop.insert("description".into(), json!(d));
        }
        if let Some(a) = &p.allowed {
            prop.insert("enum".into(), json!(a));
        }
        if let Some(d) = &p.default {
            prop.insert("default".into(), d.clone());
        }
        properties.insert(name.clone(), Value::Object(prop));
        if p.required {
            required.push(json!(name));
        }
    }
    if entry.expose_cursor {
        properties.insert(CURSOR_PARAM.into(), json!({ "type": "string" }));
    }
    let mut schema = Map::new();
    schema.insert("type".into(), json!("object"));
    schema.insert("properties".into(), Value::Object(properties));
    if !required.is_empty() {
        schema.insert("required".into(), Value::Array(required));
    }
    Value::Object(schema)
}

/// Native protocol tool for one entry. The name uses `__` for the namespace separator.
pub fn native_tool(entry: &CatalogEntry) -> Value {
    json!({
        "name": native_name(&entry.address),
        "description": entry.description,
        "inputSchema": input_schema(entry),
    })
}

pub fn native_name(address: &str) -> String {
    address.replace('.', "__")
}

/// Every catalog entry registered as a standalone tool.
pub fn flat_advertisement(catalog: &Catalog) -> String {
    let tools: Vec<Value> = catalog.entries().iter().map(native_tool).collect();
    serde_json::to_string(&tools).expect("json")
}

pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> u64;
}

/// One token per four bytes, rounded up.
pub struct Chars4;

impl Tokenizer for Chars4 {
    fn count(&self, text: &str) -> u64 {
        (text.len() as u64).div_ceil(4)
    }
}

impl<F: Fn(&str) -> u64 + Send + Sync> Tokenizer for F {
    fn count(&self, text: &str) -> u64 {
        self(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextCostReport {
    pub catalog_tool_count: usize,
    pub flat_advertisement_tokens: u64,
    pub codemode_surface_tokens: u64,
    pub interface_bytes_total: usize,
    pub bytes_per_tool: f64,
    pub reduction_ratio: f64,
}

pub fn measure_context(catalog: &Catalog, tokenizer: &dyn Tokenizer, config: &GatewayConfig) -> ContextCostReport {
    let n = catalog.len();
    let flat = if n == 0 { 0 } else { tokenizer.count(&flat_advertisement(catalog)) };
    let surface = tokenizer.count(&advertisement_surface(config));
    let interface_bytes_total = if n == 0 { 0 } else { generate_interface(catalog).len() };
    ContextCostReport {
        catalog_tool_count: n,
        flat_advertisement_tokens: flat,
        codemode_surface_tokens: surface,
        interface_bytes_total,
        bytes_per_tool: if n == 0 { 0.0 } else { interface_bytes_total as f64 / n as f64 },
        reduction_ratio: if n == 0 || surface == 0 { 0.0 } else { flat as f64 / surface as f64 },
    }
}
