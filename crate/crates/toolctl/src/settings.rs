use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use dadl_core::authz::audit::{AuditSink, FileSink, MemorySink, StderrSink, TeeSink};
use dadl_core::authz::Policy;
use dadl_core::credentials::{list_refs, CredentialResolver, ResolverConfig};
use dadl_core::model::DadlDocument;
use dadl_core::runtime::{Runtime, RuntimeOptions};
use serde::Deserialize;

use crate::cli::{Global, Transport};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8765";

/// Values from the optional config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub library_dir: Option<PathBuf>,
    pub secrets_file: Option<PathBuf>,
    pub resolver_config: Option<PathBuf>,
    pub policy_file: Option<PathBuf>,
    pub audit_sink: Option<String>,
    #[serde(default)]
    pub audit_strict: bool,
    pub transport: Option<String>,
    pub listen: Option<SocketAddr>,
    pub log_level: Option<String>,
}

/// Effective configuration after merging flags, environment and config file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub library_dir: Option<PathBuf>,
    pub secrets_file: Option<PathBuf>,
    pub resolver_config: Option<PathBuf>,
    pub policy_file: Option<PathBuf>,
    pub audit_sink: Option<String>,
    pub audit_strict: bool,
    pub transport: Transport,
    pub listen: SocketAddr,
    pub log_level: Option<String>,
}

fn relative_to(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_absolute() { p } else { base.join(p) })
}

impl Settings {
    pub fn load(global: &Global) -> anyhow::Result<Settings> {
        let file = match &global.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let cfg: FileConfig = serde_yaml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                let base = path.parent().unwrap_or(Path::new("."));
                FileConfig {
                    library_dir: relative_to(base, cfg.library_dir),
                    secrets_file: relative_to(base, cfg.secrets_file),
                    resolver_config: relative_to(base, cfg.resolver_config),
                    policy_file: relative_to(base, cfg.policy_file),
                    ..cfg
                }
            }
            None => FileConfig::default(),
        };
        let transport = match file.transport.as_deref() {
            None | Some("stdio") => Transport::Stdio,
            Some("http") => Transport::Http,
            Some(other) => anyhow::bail!("unknown transport `{other}` in config file"),
        };
        Ok(Settings {
            library_dir: global.library_dir.clone().or(file.library_dir),
            secrets_file: global.secrets_file.clone().or(file.secrets_file),
            resolver_config: global.resolver_config.clone().or(file.resolver_config),
            policy_file: global.policy_file.clone().or(file.policy_file),
            audit_sink: global.audit_sink.clone().or(file.audit_sink),
            audit_strict: global.audit_strict || file.audit_strict,
            transport,
            listen: file.listen.unwrap_or_else(|| DEFAULT_LISTEN.parse().expect("default address")),
            log_level: global.log_level.clone().or(file.log_level),
        })
    }

    pub fn library_dir(&self) -> anyhow::Result<&Path> {
        self.library_dir.as_deref().context("no library directory (use --library-dir or DADL_LIBRARY_DIR)")
    }

    pub fn policy(&self) -> anyhow::Result<Policy> {
        match &self.policy_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(Policy::from_yaml(&text)?)
            }
            None => {
                tracing::warn!("no policy file given, every principal may call every tool");
                Ok(Policy::allow_all())
            }
        }
    }

    /// Resolver for `documents` and the policy's principal tokens.
    pub fn resolver<'a>(&self, documents: impl IntoIterator<Item = &'a DadlDocument>, policy: &Policy) -> anyhow::Result<CredentialResolver> {
        let config = if let Some(path) = &self.resolver_config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ResolverConfig::from_yaml(&text)?
        } else {
            let mut config = ResolverConfig::standard(self.secrets_file.as_deref());
            if let Some(path) = &self.secrets_file {
                let mut namespaces = BTreeSet::new();
                for doc in documents {
                    namespaces.extend(list_refs(doc).iter().filter_map(|r| r.namespace().map(str::to_string)));
                }
                namespaces.extend(policy.principals.values().filter_map(|p| p.token.as_ref()?.namespace().map(str::to_string)));
                for ns in namespaces.iter().filter(|ns| *ns != "env" && *ns != "file") {
                    config = config.with_file(ns, path);
                }
            }
            config
        };
        Ok(CredentialResolver::new(config)?)
    }

    pub fn sink(&self, memory: Option<Arc<MemorySink>>) -> anyhow::Result<Arc<dyn AuditSink>> {
        let mut sinks: Vec<Arc<dyn AuditSink>> = Vec::new();
        match self.audit_sink.as_deref() {
            Some("-") => sinks.push(Arc::new(StderrSink)),
            Some(path) => sinks.push(Arc::new(FileSink::open(Path::new(path))?)),
            None => {}
        }
        if let Some(m) = memory {
            sinks.push(m);
        }
        Ok(Arc::new(TeeSink(sinks)))
    }

    pub fn runtime<'a>(
        &self,
        documents: impl IntoIterator<Item = &'a DadlDocument>,
        sink: Arc<dyn AuditSink>,
        strict_composites: bool,
    ) -> anyhow::Result<Arc<Runtime>> {
        let policy = self.policy()?;
        let resolver = self.resolver(documents, &policy)?;
        let options = RuntimeOptions { audit_strict: self.audit_strict, strict_composites };
        Ok(Arc::new(Runtime::new(Arc::new(resolver), policy, sink, options)))
    }
}
