use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::SystemTime;

use parking_lot::{Mutex, RwLock};
use serde::Serialize;

use super::interface::method_text;
use crate::authz::Principal;
use crate::model::{effective_tool, parse_document, validate, AccessLabel, DadlDocument, ResolvedParam, ResolvedTool};
use crate::runtime::{composite_param_defs, CompositeTarget, Runtime, ToolBinding};

/// What a catalog name dispatches to.
#[derive(Debug, Clone)]
pub enum EntryTarget {
    Tool(Arc<ResolvedTool>),
    Composite(CompositeTarget),
}

/// One callable tool or composite of the catalog.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub backend: String,
    pub name: String,
    /// `backend.name`.
    pub qualified: String,
    /// Bare name when unique across the catalog, otherwise the qualified name.
    pub address: String,
    pub description: String,
    pub access: Option<AccessLabel>,
    pub params: BTreeMap<String, ResolvedParam>,
    /// Expose-mode pagination: result is `{items, next_cursor}` and `_cursor` is accepted.
    pub expose_cursor: bool,
    pub allow_jq: bool,
    pub target: EntryTarget,
    /// TypeScript method declaration with its doc comment.
    pub interface: String,
}

impl CatalogEntry {
    pub fn is_composite(&self) -> bool {
        matches!(self.target, EntryTarget::Composite(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{source_name}: {message}")]
pub struct LoadError {
    pub source_name: String,
    pub message: String,
}

/// An immutable snapshot of every loaded backend.
pub struct Catalog {
    generation: u64,
    documents: BTreeMap<String, Arc<DadlDocument>>,
    sources: BTreeMap<String, String>,
    entries: Vec<CatalogEntry>,
    by_name: HashMap<String, usize>,
    tools: Arc<HashMap<String, Arc<ResolvedTool>>>,
    composites: Arc<HashMap<String, CompositeTarget>>,
    namespaces: Arc<BTreeSet<String>>,
}

impl std::fmt::Debug for Catalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Catalog")
            .field("generation", &self.generation)
            .field("backends", &self.documents.keys().collect::<Vec<_>>())
            .field("entries", &self.entries.len())
            .finish()
    }
}

impl Catalog {
    pub fn empty() -> Catalog {
        Catalog::build(Vec::new(), 0).expect("empty catalog")
    }

    /// Build a catalog from `(source name, document)` pairs. Documents are not re-validated.
    pub fn build(documents: Vec<(String, DadlDocument)>, generation: u64) -> Result<Catalog, Vec<LoadError>> {
        let mut errors = Vec::new();
        let mut docs: BTreeMap<String, Arc<DadlDocument>> = BTreeMap::new();
        let mut sources = BTreeMap::new();
        for (source, doc) in documents {
            let backend = doc.backend.name.clone();
            if let Some(first) = sources.get(&backend) {
                errors.push(LoadError {
                    source_name: source.clone(),
                    message: format!("backend `{backend}` is already defined in {first}"),
                });
                continue;
            }
            sources.insert(backend.clone(), source);
            docs.insert(backend, Arc::new(doc));
        }
        if !errors.is_empty() {
            return Err(errors);
        }

        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in docs.values() {
            for name in doc.tools.keys().chain(doc.composites.keys()) {
                *counts.entry(name.as_str()).or_default() += 1;
            }
        }
        let mut entries = Vec::new();
        for (backend, doc) in &docs {
            let mut names: Vec<(&String, bool)> = doc.tools.keys().map(|n| (n, false)).collect();
            names.extend(doc.composites.keys().map(|n| (n, true)));
            names.sort();
            for (name, composite) in names {
                let qualified = format!("{backend}.{name}");
                let address = if counts[name.as_str()] == 1 { name.clone() } else { qualified.clone() };
                let entry = if composite {
                    let def = &doc.composites[name];
                    CatalogEntry {
                        backend: backend.clone(),
                        name: name.clone(),
                        qualified,
                        address,
                        description: def.description.clone(),
                        access: def.access.clone(),
                        params: composite_param_defs(&def.params),
                        expose_cursor: false,
                        allow_jq: false,
                        target: EntryTarget::Composite(CompositeTarget { document: doc.clone(), name: name.clone() }),
                        interface: String::new(),
                    }
                } else {
                    let tool = effective_tool(doc, name).expect("listed tool resolves");
                    CatalogEntry {
                        backend: backend.clone(),
                        name: name.clone(),
                        qualified,
                        address,
                        description: tool.description_with_hints.clone(),
                        access: tool.access.clone(),
                        params: tool.params.clone(),
                        expose_cursor: tool.expose_paginated(),
                        allow_jq: tool.transform.allow_jq_override,
                        target: EntryTarget::Tool(Arc::new(tool)),
                        interface: String::new(),
                    }
                };
                entries.push(entry);
            }
        }
        for e in &mut entries {
            e.interface = method_text(e);
        }

        let mut by_name = HashMap::new();
        let mut tools = HashMap::new();
        let mut composites = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            by_name.insert(e.qualified.clone(), i);
            by_name.insert(e.address.clone(), i);
            for key in [&e.qualified, &e.address] {
                match &e.target {
                    EntryTarget::Tool(t) => {
                        tools.insert(key.clone(), t.clone());
                    }
                    EntryTarget::Composite(c) => {
                        composites.insert(key.clone(), c.clone());
                    }
                }
            }
        }
        let namespaces = docs.keys().cloned().collect();
        Ok(Catalog {
            generation,
            documents: docs,
            sources,
            entries,
            by_name,
            tools: Arc::new(tools),
            composites: Arc::new(composites),
            namespaces: Arc::new(namespaces),
        })
    }

    /// Parse and validate every `.dadl` file in `dir`. Any failure rejects the whole set.
    pub fn load_dir(dir: &Path, generation: u64) -> Result<Catalog, Vec<LoadError>> {
        let files = dadl_files(dir).map_err(|e| vec![e])?;
        let mut docs = Vec::new();
        let mut errors = Vec::new();
        for path in files {
            let source = path.display().to_string();
            match load_file(&path) {
                Ok(doc) => docs.push((source, doc)),
                Err(message) => errors.push(LoadError { source_name: source, message }),
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        Catalog::build(docs, generation)
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn documents(&self) -> impl Iterator<Item = &Arc<DadlDocument>> {
        self.documents.values()
    }

    pub fn document(&self, backend: &str) -> Option<&Arc<DadlDocument>> {
        self.documents.get(backend)
    }

    pub fn source_of(&self, backend: &str) -> Option<&str> {
        self.sources.get(backend).map(String::as_str)
    }

    /// Entries ordered by backend, then name.
    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Look up by address or qualified name.
    pub fn entry(&self, name: &str) -> Option<&CatalogEntry> {
        self.by_name.get(name).map(|&i| &self.entries[i])
    }

    /// `api` binding spanning the whole catalog.
    pub fn binding(&self, runtime: Arc<Runtime>, principal: Principal, parent: String) -> ToolBinding {
        ToolBinding::new(runtime, self.tools.clone(), self.namespaces.clone(), principal, parent)
            .with_composites(self.composites.clone())
    }
}

pub fn load_file(path: &Path) -> Result<DadlDocument, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let doc = parse_document(&text).map_err(|e| e.to_string())?;
    let report = validate(&doc);
    if let Some(first) = report.errors.first() {
        let more = report.errors.len() - 1;
        let suffix = if more > 0 { format!(" (and {more} more)") } else { String::new() };
        return Err(format!("{}: {}{suffix}", first.path, first.message));
    }
    Ok(doc)
}

/// Sorted `.dadl` files directly inside `dir`.
pub fn dadl_files(dir: &Path) -> Result<Vec<PathBuf>, LoadError> {
    let read = std::fs::read_dir(dir)
        .map_err(|e| LoadError { source_name: dir.display().to_string(), message: e.to_string() })?;
    let mut files: Vec<PathBuf> = read
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "dadl"))
        .collect();
    files.sort();
    Ok(files)
}

/// Holds the current catalog generation and swaps it atomically on reload.
pub struct CatalogStore {
    current: RwLock<Arc<Catalog>>,
    dir: Option<PathBuf>,
    reload_lock: Mutex<()>,
}

impl CatalogStore {
    pub fn new(catalog: Catalog) -> Self {
        CatalogStore { current: RwLock::new(Arc::new(catalog)), dir: None, reload_lock: Mutex::new(()) }
    }

    pub fn from_dir(dir: &Path) -> Result<Self, Vec<LoadError>> {
        let catalog = Catalog::load_dir(dir, 1)?;
        Ok(CatalogStore { current: RwLock::new(Arc::new(catalog)), dir: Some(dir.to_path_buf()), reload_lock: Mutex::new(()) })
    }

    /// The current generation. Holders keep it alive across reloads.
    pub fn snapshot(&self) -> Arc<Catalog> {
        self.current.read().clone()
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Replace the catalog with `documents`; on error the current one stays.
    pub fn replace(&self, documents: Vec<(String, DadlDocument)>) -> Result<u64, Vec<LoadError>> {
        let _guard = self.reload_lock.lock();
        let next = self.current.read().generation + 1;
        let catalog = Catalog::build(documents, next)?;
        *self.current.write() = Arc::new(catalog);
        Ok(next)
    }

    /// Re-read the library directory.
    pub fn reload(&self) -> Result<u64, Vec<LoadError>> {
        let dir = self.dir.as_ref().ok_or_else(|| {
            vec![LoadError { source_name: "catalog".into(), message: "catalog was not loaded from a directory".into() }]
        })?;
        let _guard = self.reload_lock.lock();
        let next = self.current.read().generation + 1;
        let catalog = Catalog::load_dir(dir, next)?;
        *self.current.write() = Arc::new(catalog);
        Ok(next)
    }
}

/// Cheap change detector for a library directory: names, sizes and mtimes.
pub fn dir_fingerprint(dir: &Path) -> Vec<(PathBuf, u64, Option<SystemTime>)> {
    dadl_files(dir)
        .unwrap_or_default()
        .into_iter()
        .map(|p| {
            let meta = std::fs::metadata(&p).ok();
            let len = meta.as_ref().map_or(0, |m| m.len());
            let modified = meta.and_then(|m| m.modified().ok());
            (p, len, modified)
        })
        .collect()
}

/// Poll `store`'s directory and reload when it changes.
pub async fn watch(store: Arc<CatalogStore>, interval: std::time::Duration) {
    let Some(dir) = store.dir().map(Path::to_path_buf) else { return };
    let mut last = dir_fingerprint(&dir);
    loop {
        tokio::time::sleep(interval).await;
        let now = dir_fingerprint(&dir);
        if now == last {
            continue;
        }
        last = now;
        match store.reload() {
            Ok(generation) => tracing::info!(generation, "catalog reloaded"),
            Err(errors) => {
                for e in errors {
                    tracing::warn!(file = %e.source_name, error = %e.message, "reload rejected, keeping previous catalog");
                }
            }
        }
    }
}
