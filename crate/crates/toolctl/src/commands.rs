use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use dadl_core::authz::audit::{AuditRecord, MemorySink};
use dadl_core::gateway::rpc::{serve_http, serve_stdio, ANONYMOUS};
use dadl_core::gateway::synthetic::{synthetic_catalog, SyntheticProfile};
use dadl_core::gateway::{dadl_files, measure_context, watch, Catalog, CatalogStore, Chars4, EntryTarget, Gateway, GatewayConfig};
use dadl_core::model::{coverage_report, document_schema, parse_document, static_closure, validate, DadlDocument, Finding};
use dadl_core::runtime::{script_value, InvokeError};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::cli::{CallArgs, ClosureArgs, MeasureArgs, PathsArgs, ServeArgs, Transport, ValidateArgs};
use crate::settings::Settings;

/// `println!` that tolerates a closed stdout, as when piped into `head`.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DENIED: u8 = 3;
pub const EXIT_UPSTREAM: u8 = 4;

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

fn usage(e: impl fmt::Display) -> Failure {
    Failure::new(EXIT_USAGE, e.to_string())
}

pub type Outcome = Result<u8, Failure>;

fn print_json(v: &impl Serialize) {
    out!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

/// Expand directories to their `.dadl` files. Unreadable paths are kept so the caller reports them.
fn collect_paths(args: &PathsArgs, settings: &Settings) -> Result<Vec<PathBuf>, Failure> {
    let roots = if args.paths.is_empty() { vec![settings.library_dir().map_err(usage)?.to_path_buf()] } else { args.paths.clone() };
    let mut out = Vec::new();
    for root in roots {
        if root.is_dir() {
            out.extend(dadl_files(&root).map_err(usage)?);
        } else {
            out.push(root);
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct FileReport {
    path: String,
    ok: bool,
    errors: Vec<Finding>,
    warnings: Vec<Finding>,
}

fn check_file(path: &Path) -> (Option<DadlDocument>, FileReport) {
    let name = path.display().to_string();
    let fail = |code: &'static str, path: String, message: String| FileReport {
        path: name.clone(),
        ok: false,
        errors: vec![Finding { path, code, message }],
        warnings: Vec::new(),
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return (None, fail("io_error", String::new(), e.to_string())),
    };
    let doc = match parse_document(&text) {
        Ok(d) => d,
        Err(e) => return (None, fail("parse_error", e.path().unwrap_or("").to_string(), e.to_string())),
    };
    let report = validate(&doc);
    let file = FileReport { path: name, ok: report.is_ok(), errors: report.errors, warnings: report.warnings };
    (Some(doc), file)
}

pub fn validate_cmd(args: &ValidateArgs, settings: &Settings, as_json: bool) -> Outcome {
    let paths = collect_paths(&args.paths, settings)?;
    let mut files = Vec::new();
    for p in &paths {
        let (_, mut report) = check_file(p);
        if args.strict && !report.warnings.is_empty() {
            report.ok = false;
        }
        files.push(report);
    }
    let ok = files.iter().all(|f| f.ok);
    if as_json {
        print_json(&json!({ "ok": ok, "files": files }));
    } else {
        for f in &files {
            out!("{} {}", if f.ok { "OK" } else { "FAIL" }, f.path);
            for e in &f.errors {
                out!("  error at `{}`: {} [{}]", e.path, e.message, e.code);
            }
            for w in &f.warnings {
                out!("  warning at `{}`: {} [{}]", w.path, w.message, w.code);
            }
        }
    }
    Ok(if ok { EXIT_OK } else { EXIT_VALIDATION })
}

/// Parse and validate every path, failing on the first invalid file.
fn load_documents(paths: &[PathBuf]) -> Result<Vec<(PathBuf, DadlDocument)>, Failure> {
    let mut docs = Vec::new();
    for p in paths {
        let (doc, report) = check_file(p);
        match doc {
            Some(d) if report.ok => docs.push((p.clone(), d)),
            _ => {
                let first = report.errors.first().map(|e| format!("`{}`: {}", e.path, e.message)).unwrap_or_default();
                return Err(Failure::new(EXIT_VALIDATION, format!("{}: {first}", p.display())));
            }
        }
    }
    Ok(docs)
}

#[derive(Serialize)]
struct ToolRef {
    name: String,
    access: Option<String>,
}

#[derive(Serialize)]
struct EndpointOut {
    method: &'static str,
    path: String,
    tools: Vec<ToolRef>,
}

#[derive(Serialize)]
struct CompositeOut {
    access: Option<String>,
    reaches: Vec<String>,
}

#[derive(Serialize)]
struct ClosureOut {
    path: String,
    backend: String,
    contains_code: bool,
    endpoints: Vec<EndpointOut>,
    composites: BTreeMap<String, CompositeOut>,
    auth_endpoints: Vec<String>,
}

pub fn closure_cmd(args: &ClosureArgs, settings: &Settings, as_json: bool) -> Outcome {
    let docs = load_documents(&collect_paths(&args.paths, settings)?)?;
    let wanted = |label: Option<&str>| args.access.as_deref().is_none_or(|a| label == Some(a));
    let mut out = Vec::new();
    for (path, doc) in &docs {
        let surface = static_closure(doc).map_err(|v| {
            let text: Vec<String> = v.iter().map(ToString::to_string).collect();
            Failure::new(EXIT_VALIDATION, format!("{}: {}", path.display(), text.join("; ")))
        })?;
        let endpoints = surface
            .entries
            .iter()
            .filter_map(|e| {
                let tools: Vec<ToolRef> = e
                    .tool_names
                    .iter()
                    .map(|n| ToolRef { name: n.clone(), access: doc.tools[n].access.as_ref().map(|a| a.as_str().to_string()) })
                    .filter(|t| wanted(t.access.as_deref()))
                    .collect();
                (!tools.is_empty()).then(|| EndpointOut { method: e.method.as_str(), path: e.path_template.clone(), tools })
            })
            .collect();
        let composites = surface
            .composite_reachable
            .iter()
            .map(|(name, reach)| {
                let access = doc.composites[name].access.as_ref().map(|a| a.as_str().to_string());
                (name.clone(), CompositeOut { access, reaches: reach.iter().cloned().collect() })
            })
            .filter(|(_, c)| wanted(c.access.as_deref()))
            .collect();
        out.push(ClosureOut {
            path: path.display().to_string(),
            backend: doc.backend.name.clone(),
            contains_code: doc.contains_code,
            endpoints,
            composites,
            auth_endpoints: surface.auth_endpoints.clone(),
        });
    }
    if as_json {
        print_json(&json!({ "files": out }));
        return Ok(EXIT_OK);
    }
    for f in &out {
        out!("{} ({})", f.backend, f.path);
        if f.contains_code {
            out!("  CONTAINS CODE: composites run sandboxed scripts; review before deploying");
        }
        for e in &f.endpoints {
            let tools: Vec<String> =
                e.tools.iter().map(|t| format!("{} [{}]", t.name, t.access.as_deref().unwrap_or("unlabeled"))).collect();
            out!("  {} {}  {}", e.method, e.path, tools.join(", "));
        }
        for (name, c) in &f.composites {
            out!("  composite {name} [{}] -> {}", c.access.as_deref().unwrap_or("unlabeled"), c.reaches.join(", "));
        }
        for a in &f.auth_endpoints {
            out!("  auth {a}");
        }
    }
    Ok(EXIT_OK)
}

pub fn coverage_cmd(args: &PathsArgs, settings: &Settings, as_json: bool) -> Outcome {
    let docs: Vec<DadlDocument> = load_documents(&collect_paths(args, settings)?)?.into_iter().map(|(_, d)| d).collect();
    let report = coverage_report(&docs);
    if as_json {
        print_json(&report);
        return Ok(EXIT_OK);
    }
    out!("{:<24} {:>7} {:>9} {:>8}  note", "backend", "tools", "estimated", "percent");
    for s in &report.summaries {
        let estimated = s.declared.as_ref().and_then(|c| c.estimated_total).map_or("-".to_string(), |t| t.to_string());
        let percent = s.computed_percent.map_or("-".to_string(), |p| format!("{p:.1}%"));
        let note = if s.discrepancy { "declared tools_defined differs from file" } else { "" };
        out!("{:<24} {:>7} {:>9} {:>8}  {note}", s.backend, s.tools_defined, estimated, percent);
    }
    let t = &report.totals;
    out!(
        "total: {} documents, {} tools, {} with coverage blocks, {} estimated endpoints",
        t.documents, t.tools_defined, t.documents_with_coverage, t.estimated_total
    );
    Ok(EXIT_OK)
}

pub fn measure_cmd(args: &MeasureArgs, settings: &Settings, as_json: bool) -> Outcome {
    let catalog = match args.synthetic {
        Some(n) => synthetic_catalog(&SyntheticProfile::registry_like(n)),
        None => Catalog::load_dir(settings.library_dir().map_err(usage)?, 1).map_err(|errors| {
            let text: Vec<String> = errors.iter().map(ToString::to_string).collect();
            Failure::new(EXIT_VALIDATION, text.join("\n"))
        })?,
    };
    let report = measure_context(&catalog, &Chars4, &GatewayConfig::default());
    if as_json {
        print_json(&report);
    } else {
        out!("tools:                {}", report.catalog_tool_count);
        out!("flat tokens:          {}", report.flat_advertisement_tokens);
        out!("code mode tokens:     {}", report.codemode_surface_tokens);
        out!("reduction ratio:      {:.1}x", report.reduction_ratio);
        out!("interface bytes:      {}", report.interface_bytes_total);
        out!("interface bytes/tool: {:.0}", report.bytes_per_tool);
    }
    Ok(EXIT_OK)
}

fn exit_code(e: &InvokeError) -> u8 {
    match e {
        InvokeError::Denied { .. } => EXIT_DENIED,
        InvokeError::UnknownTool(_) | InvokeError::InvalidParams(_) => EXIT_USAGE,
        InvokeError::Engine(inner) if inner.kind() == "invalid_params" => EXIT_USAGE,
        _ => EXIT_UPSTREAM,
    }
}

fn audit_summary(rec: &AuditRecord) -> String {
    let mut line = format!(
        "audit: {} {}.{} [{}] {:?} {:?}",
        serde_json::to_value(rec.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
        rec.backend,
        rec.tool,
        rec.access,
        rec.decision,
        rec.outcome
    );
    if let Some(status) = rec.upstream_status {
        line.push_str(&format!(" status={status}"));
    }
    line.push_str(&format!(" attempts={}", rec.attempts));
    if let Some(r) = &rec.reason {
        line.push_str(&format!(" reason={r}"));
    }
    if let Some(p) = &rec.parent_context {
        line.push_str(&format!(" parent={p}"));
    }
    line
}

pub async fn call_cmd(args: &CallArgs, settings: &Settings, as_json: bool) -> Outcome {
    let dir = settings.library_dir().map_err(usage)?;
    let catalog = Catalog::load_dir(dir, 1).map_err(|errors| {
        let text: Vec<String> = errors.iter().map(ToString::to_string).collect();
        Failure::new(EXIT_VALIDATION, text.join("\n"))
    })?;
    let params: Map<String, Value> = match serde_json::from_str(&args.params) {
        Ok(Value::Object(m)) => m,
        Ok(_) => return Err(usage("--params must be a JSON object")),
        Err(e) => return Err(usage(format!("--params is not valid JSON: {e}"))),
    };
    let entry = catalog.entry(&args.tool).ok_or_else(|| usage(format!("unknown tool `{}`", args.tool)))?;
    let memory = Arc::new(MemorySink::new());
    let sink = settings.sink(Some(memory.clone())).map_err(usage)?;
    let runtime = settings.runtime(catalog.documents().map(|d| d.as_ref()), sink, false).map_err(usage)?;
    let principal = runtime.policy().principal(&args.principal);
    let result = match &entry.target {
        EntryTarget::Tool(tool) => runtime.invoke(tool, &params, &principal, None).await.map(|r| script_value(tool, r)),
        EntryTarget::Composite(c) => runtime.run_composite(&c.document, &c.name, &params, &principal).await.map(|o| o.value),
    };
    for rec in memory.records() {
        eprintln!("{}", audit_summary(&rec));
    }
    match result {
        Ok(value) => {
            if as_json {
                out!("{}", serde_json::to_string(&value).expect("json"));
            } else {
                print_json(&value);
            }
            Ok(EXIT_OK)
        }
        Err(e) => Err(Failure::new(exit_code(&e), format!("{}: {e}", e.kind()))),
    }
}

pub fn schema_cmd() -> Outcome {
    print_json(&document_schema());
    Ok(EXIT_OK)
}

#[cfg(unix)]
fn reload_on_sighup(store: Arc<CatalogStore>) {
    use tokio::signal::unix::{signal, SignalKind};
    let Ok(mut hup) = signal(SignalKind::hangup()) else {
        tracing::warn!("cannot install SIGHUP handler");
        return;
    };
    tokio::spawn(async move {
        while hup.recv().await.is_some() {
            match store.reload() {
                Ok(generation) => tracing::info!(generation, "catalog reloaded"),
                Err(errors) => {
                    for e in errors {
                        tracing::warn!(file = %e.source_name, error = %e.message, "reload rejected, keeping previous catalog");
                    }
                }
            }
        }
    });
}

#[cfg(not(unix))]
fn reload_on_sighup(_store: Arc<CatalogStore>) {}

pub async fn serve_cmd(args: &ServeArgs, settings: &Settings) -> Outcome {
    let dir = settings.library_dir().map_err(usage)?;
    let store = Arc::new(CatalogStore::from_dir(dir).map_err(|errors| {
        let text: Vec<String> = errors.iter().map(ToString::to_string).collect();
        Failure::new(EXIT_VALIDATION, text.join("\n"))
    })?);
    let sink = settings.sink(None).map_err(usage)?;
    let snapshot = store.snapshot();
    let runtime = settings.runtime(snapshot.documents().map(|d| d.as_ref()), sink, args.strict_composites).map_err(usage)?;
    drop(snapshot);
    let config = GatewayConfig { expose_native: args.expose_native, ..GatewayConfig::default() };
    let gateway = Arc::new(Gateway::new(store.clone(), runtime, config));
    reload_on_sighup(store.clone());
    if args.watch {
        tokio::spawn(watch(store.clone(), Duration::from_millis(500)));
    }
    tracing::info!(tools = store.snapshot().len(), "catalog loaded");
    let transport = args.transport.unwrap_or(settings.transport);
    let io = |e: std::io::Error| Failure::new(EXIT_UPSTREAM, e.to_string());
    match transport {
        Transport::Stdio => {
            let principal = gateway.runtime().policy().principal(args.principal.as_deref().unwrap_or(ANONYMOUS));
            let stdin = tokio::io::BufReader::new(tokio::io::stdin());
            serve_stdio(gateway, stdin, tokio::io::stdout(), principal).await.map_err(io)?;
        }
        Transport::Http => {
            let addr = args.listen.unwrap_or(settings.listen);
            let listener = tokio::net::TcpListener::bind(addr).await.map_err(io)?;
            eprintln!("listening on http://{}", listener.local_addr().map_err(io)?);
            let shutdown = async {
                let _ = tokio::signal::ctrl_c().await;
            };
            serve_http(gateway, listener, shutdown).await.map_err(io)?;
        }
    }
    Ok(EXIT_OK)
}
