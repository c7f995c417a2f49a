//! Deterministic synthetic catalogs with registry-like description and parameter sizes.

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::{json, Map, Value};

use crate::model::{parse_document, DadlDocument};

const VERBS: &[&str] = &["list", "get", "create", "update", "delete", "search", "archive", "restore", "assign", "export"];
const NOUNS: &[&str] = &[
    "repository", "issue", "comment", "user", "team", "project", "invoice", "customer", "device", "alert",
    "incident", "deployment", "record", "domain", "volume", "snapshot", "ticket", "label", "webhook", "member",
    "subscription", "payment", "host", "service", "policy", "report", "dashboard", "channel", "message", "file",
];
const WORDS: &[&str] = &[
    "the", "a", "for", "of", "with", "in", "by", "and", "returns", "matching", "current", "account", "resource",
    "filter", "optional", "details", "including", "status", "metadata", "owner", "results", "page", "sorted",
    "recent", "active", "specified", "identifier", "fields", "summary", "configuration", "permissions", "limit",
    "created", "updated", "time", "range", "organization", "workspace", "object", "collection", "values",
];
const PARAM_NAMES: &[&str] = &[
    "id", "owner", "repo", "state", "labels", "sort", "direction", "since", "query", "limit", "team_id",
    "project_id", "status", "name", "email", "tags", "from", "to", "region", "format",
];
const PARAM_TYPES: &[&str] = &["string", "string", "string", "integer", "boolean", "array"];
const ACCESS: &[&str] = &["read", "read", "read", "write", "write", "admin", "dangerous"];

/// Shape of a generated catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProfile {
    pub tools: usize,
    pub backends: usize,
    /// Inclusive word-count range of tool descriptions.
    pub description_words: (usize, usize),
    pub params: (usize, usize),
    pub param_description_words: (usize, usize),
    pub seed: u64,
}

pub const TOOLS_PER_BACKEND: usize = 92;
pub const MAX_BACKENDS: usize = 20;

impl SyntheticProfile {
    /// Calibrated so a conventional flat registration costs about 310 bytes per tool.
    pub fn registry_like(tools: usize) -> Self {
        SyntheticProfile {
            tools,
            backends: tools.div_ceil(TOOLS_PER_BACKEND).clamp(1, MAX_BACKENDS),
            description_words: (7, 18),
            params: (0, 3),
            param_description_words: (2, 6),
            seed: 0x5eed,
        }
    }
}

fn sentence(rng: &mut StdRng, words: (usize, usize), lead: &[&str]) -> String {
    let n = rng.gen_range(words.0..=words.1);
    let mut out: Vec<String> = lead.iter().map(|s| s.to_string()).collect();
    while out.len() < n {
        out.push(WORDS.choose(rng).expect("words").to_string());
    }
    let mut s = out.join(" ");
    if let Some(first) = s.get(0..1) {
        s = first.to_uppercase() + &s[1..];
    }
    s.push('.');
    s
}

fn backend_document(rng: &mut StdRng, profile: &SyntheticProfile, index: usize, count: usize) -> Value {
    let name = format!("svc{index:02}");
    let mut tools = Map::new();
    let mut used = BTreeSet::new();
    let mut serial = 0;
    while tools.len() < count {
        let verb = *VERBS.choose(rng).expect("verbs");
        let noun = *NOUNS.choose(rng).expect("nouns");
        let mut tool_name = format!("{verb}_{noun}");
        if !used.insert(tool_name.clone()) {
            serial += 1;
            tool_name = format!("{verb}_{noun}_{serial}");
            used.insert(tool_name.clone());
        }
        let n_params = rng.gen_range(profile.params.0..=profile.params.1);
        let mut names: Vec<&str> = PARAM_NAMES.to_vec();
        names.shuffle(rng);
        let mut params = Map::new();
        let mut path = format!("/{noun}s");
        for pname in names.into_iter().take(n_params) {
            let kind = *PARAM_TYPES.choose(rng).expect("types");
            let description = sentence(rng, profile.param_description_words, &[]);
            let mut p = Map::new();
            p.insert("type".into(), json!(kind));
            p.insert("description".into(), json!(description));
            if pname == "id" {
                p.insert("type".into(), json!("string"));
                p.insert("required".into(), json!(true));
                p.insert("location".into(), json!("path"));
                path.push_str("/{id}");
            } else if rng.gen_bool(0.3) {
                p.insert("required".into(), json!(true));
            }
            params.insert(pname.to_string(), Value::Object(p));
        }
        let method = match verb {
            "create" | "assign" | "export" => "POST",
            "update" | "archive" | "restore" => "PATCH",
            "delete" => "DELETE",
            _ => "GET",
        };
        let description = sentence(rng, profile.description_words, &[verb, noun]);
        tools.insert(
            tool_name,
            json!({
                "method": method,
                "path": path,
                "access": ACCESS.choose(rng).expect("access"),
                "description": description,
                "params": params,
            }),
        );
    }
    json!({
        "backend": {
            "name": name,
            "type": "rest",
            "base_url": format!("https://{name}.example.test/api"),
            "description": format!("Synthetic service {index}"),
        },
        "tools": tools,
    })
}

/// Generate the documents of `profile`, tools spread evenly across backends.
pub fn synthetic_documents(profile: &SyntheticProfile) -> Vec<DadlDocument> {
    if profile.tools == 0 {
        return Vec::new();
    }
    let mut rng = StdRng::seed_from_u64(profile.seed);
    let backends = profile.backends.clamp(1, profile.tools);
    let base = profile.tools / backends;
    let extra = profile.tools % backends;
    (0..backends)
        .map(|i| {
            let count = base + usize::from(i < extra);
            let value = backend_document(&mut rng, profile, i, count);
            let text = serde_yaml::to_string(&value).expect("yaml");
            parse_document(&text).expect("synthetic document parses")
        })
        .collect()
}

/// Build a catalog directly from a profile.
pub fn synthetic_catalog(profile: &SyntheticProfile) -> super::Catalog {
    let docs = synthetic_documents(profile)
        .into_iter()
        .map(|d| (format!("synthetic/{}.dadl", d.backend.name), d))
        .collect();
    super::Catalog::build(docs, 1).expect("synthetic backends are unique")
}
