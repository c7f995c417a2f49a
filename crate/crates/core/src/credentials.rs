//! Resolution of logical credential references (`namespace/key`) to secrets.
//!
//! Documents only ever carry references. Each resolver backend owns one
//! namespace; the first configured backend whose namespace matches wins.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::model::{CredentialRef, DadlDocument};

/// Environment variable naming the default secrets file.
pub const SECRETS_FILE_ENV: &str = "DADL_SECRETS_FILE";

/// A resolved secret. Its bytes are only reachable through [`SecretValue::expose`].
#[derive(Clone)]
pub struct SecretValue {
    value: Vec<u8>,
    pub resolved_from: CredentialRef,
    pub fetched_at: DateTime<Utc>,
}

impl SecretValue {
    pub fn new(value: impl Into<Vec<u8>>, resolved_from: CredentialRef) -> Self {
        SecretValue { value: value.into(), resolved_from, fetched_at: Utc::now() }
    }

    pub fn expose(&self) -> &[u8] {
        &self.value
    }

    /// The secret as UTF-8 text, lossily converted.
    pub fn expose_str(&self) -> String {
        String::from_utf8_lossy(&self.value).into_owned()
    }
}

impl fmt::Debug for SecretValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretValue")
            .field("value", &"<redacted>")
            .field("resolved_from", &self.resolved_from.as_str())
            .field("fetched_at", &self.fetched_at)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    /// `ns/KEY` → environment variable `{prefix}KEY`.
    Env,
    /// `ns/key` → entry `key` in a flat YAML map with owner-only permissions.
    File,
    /// Fixed values from `settings`; for tests and demos.
    StaticTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub namespace: String,
    pub kind: BackendKind,
    #[serde(default)]
    pub settings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolverConfig {
    pub backends: Vec<BackendSpec>,
}

impl ResolverConfig {
    /// `env/...` from the environment plus `file/...` from `secrets_file` when given.
    pub fn standard(secrets_file: Option<&Path>) -> Self {
        let mut backends = vec![BackendSpec {
            namespace: "env".into(),
            kind: BackendKind::Env,
            settings: BTreeMap::new(),
        }];
        if let Some(path) = secrets_file {
            backends.push(BackendSpec {
                namespace: "file".into(),
                kind: BackendKind::File,
                settings: [("path".to_string(), path.display().to_string())].into(),
            });
        }
        ResolverConfig { backends }
    }

    pub fn from_yaml(text: &str) -> Result<Self, CredentialError> {
        serde_yaml::from_str(text).map_err(|e| CredentialError::Config(e.to_string()))
    }

    /// Map every reference in `namespace` to the same key in a secrets file.
    pub fn with_file(mut self, namespace: &str, path: &Path) -> Self {
        self.backends.push(BackendSpec {
            namespace: namespace.into(),
            kind: BackendKind::File,
            settings: [("path".to_string(), path.display().to_string())].into(),
        });
        self
    }

    pub fn with_static(mut self, namespace: &str, values: &[(&str, &str)]) -> Self {
        self.backends.push(BackendSpec {
            namespace: namespace.into(),
            kind: BackendKind::StaticTest,
            settings: values.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        });
        self
    }
}

/// Resolution failures. Messages name the reference, never the secret.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CredentialError {
    #[error("malformed credential reference `{0}` (expected namespace/key)")]
    Malformed(String),
    #[error("no resolver configured for namespace `{namespace}` (reference `{reference}`)")]
    UnknownNamespace { reference: String, namespace: String },
    #[error("secret `{reference}` not found")]
    MissingSecret { reference: String },
    #[error("secrets file {path} is readable by group or others (mode {mode:o}); expected owner-only")]
    FilePermissionError { path: String, mode: u32 },
    #[error("cannot read secrets file {path}: {message}")]
    FileError { path: String, message: String },
    #[error("invalid resolver configuration: {0}")]
    Config(String),
}

#[derive(Clone)]
struct CachedFile {
    stamp: (Option<SystemTime>, u64),
    entries: HashMap<String, Vec<u8>>,
}

pub struct CredentialResolver {
    config: ResolverConfig,
    files: Mutex<HashMap<PathBuf, CachedFile>>,
}

impl fmt::Debug for CredentialResolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let namespaces: Vec<&str> = self.config.backends.iter().map(|b| b.namespace.as_str()).collect();
        f.debug_struct("CredentialResolver").field("namespaces", &namespaces).finish()
    }
}

impl CredentialResolver {
    pub fn new(config: ResolverConfig) -> Result<Self, CredentialError> {
        let mut seen = BTreeSet::new();
        for b in &config.backends {
            if b.namespace.is_empty() || b.namespace.contains('/') {
                return Err(CredentialError::Config(format!("invalid namespace `{}`", b.namespace)));
            }
            if !seen.insert(b.namespace.as_str()) {
                return Err(CredentialError::Config(format!("duplicate namespace `{}`", b.namespace)));
            }
            if b.kind == BackendKind::File && !b.settings.contains_key("path") {
                return Err(CredentialError::Config(format!(
                    "file backend `{}` needs a `path` setting",
                    b.namespace
                )));
            }
        }
        Ok(CredentialResolver { config, files: Mutex::new(HashMap::new()) })
    }

    pub fn namespaces(&self) -> Vec<&str> {
        self.config.backends.iter().map(|b| b.namespace.as_str()).collect()
    }

    pub fn resolve(&self, reference: &CredentialRef) -> Result<SecretValue, CredentialError> {
        let (Some(namespace), Some(key)) = (reference.namespace(), reference.key()) else {
            return Err(CredentialError::Malformed(reference.to_string()));
        };
        if !reference.is_well_formed() {
            return Err(CredentialError::Malformed(reference.to_string()));
        }
        let backend = self
            .config
            .backends
            .iter()
            .find(|b| b.namespace == namespace)
            .ok_or_else(|| CredentialError::UnknownNamespace {
                reference: reference.to_string(),
                namespace: namespace.to_string(),
            })?;
        let missing = || CredentialError::MissingSecret { reference: reference.to_string() };
        let bytes = match backend.kind {
            BackendKind::Env => {
                let prefix = backend.settings.get("prefix").map(String::as_str).unwrap_or("");
                let var = match backend.settings.get("transform").map(String::as_str) {
                    Some("upper_snake") => upper_snake(key),
                    _ => key.to_string(),
                };
                std::env::var_os(format!("{prefix}{var}"))
                    .map(|v| v.to_string_lossy().into_owned().into_bytes())
                    .ok_or_else(missing)?
            }
            BackendKind::StaticTest => backend.settings.get(key).map(|v| v.clone().into_bytes()).ok_or_else(missing)?,
            BackendKind::File => {
                let path = PathBuf::from(&backend.settings["path"]);
                self.read_file_entry(&path, key)?.ok_or_else(missing)?
            }
        };
        Ok(SecretValue::new(bytes, reference.clone()))
    }

    fn read_file_entry(&self, path: &Path, key: &str) -> Result<Option<Vec<u8>>, CredentialError> {
        let display = path.display().to_string();
        let io_err = |e: std::io::Error| CredentialError::FileError { path: display.clone(), message: e.to_string() };
        let meta = std::fs::metadata(path).map_err(io_err)?;
        check_permissions(path, &meta)?;
        let stamp = (meta.modified().ok(), meta.len());

        let mut files = self.files.lock();
        if let Some(cached) = files.get(path) {
            if cached.stamp == stamp {
                return Ok(cached.entries.get(key).cloned());
            }
        }
        let text = std::fs::read_to_string(path).map_err(io_err)?;
        let entries = parse_secrets(&text).map_err(|message| CredentialError::FileError { path: display.clone(), message })?;
        let value = entries.get(key).cloned();
        files.insert(path.to_path_buf(), CachedFile { stamp, entries });
        Ok(value)
    }
}

fn upper_snake(key: &str) -> String {
    key.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
        .collect()
}

#[cfg(unix)]
fn check_permissions(path: &Path, meta: &std::fs::Metadata) -> Result<(), CredentialError> {
    use std::os::unix::fs::PermissionsExt;
    let mode = meta.permissions().mode() & 0o777;
    if mode & 0o077 != 0 {
        return Err(CredentialError::FilePermissionError { path: path.display().to_string(), mode });
    }
    Ok(())
}

#[cfg(not(unix))]
fn check_permissions(_path: &Path, _meta: &std::fs::Metadata) -> Result<(), CredentialError> {
    Ok(())
}

/// Flat `key: value` map; scalar values are taken as text. Errors never quote values.
fn parse_secrets(text: &str) -> Result<HashMap<String, Vec<u8>>, String> {
    let raw: serde_yaml::Value = serde_yaml::from_str(text).map_err(|e| match e.location() {
        Some(l) => format!("not valid YAML (line {}, column {})", l.line(), l.column()),
        None => "not valid YAML".to_string(),
    })?;
    let map = match raw {
        serde_yaml::Value::Mapping(m) => m,
        serde_yaml::Value::Null => return Ok(HashMap::new()),
        _ => return Err("expected a flat mapping of key to string".into()),
    };
    let mut out = HashMap::new();
    for (k, v) in map {
        let key = match k {
            serde_yaml::Value::String(s) => s,
            _ => return Err("secret keys must be strings".into()),
        };
        let value = match v {
            serde_yaml::Value::String(s) => s,
            serde_yaml::Value::Number(n) => n.to_string(),
            serde_yaml::Value::Bool(b) => b.to_string(),
            _ => return Err(format!("value of `{key}` must be a scalar")),
        };
        out.insert(key, value.into_bytes());
    }
    Ok(out)
}

/// Every credential reference a document's auth configuration uses.
pub fn list_refs(document: &DadlDocument) -> BTreeSet<CredentialRef> {
    document
        .auth
        .as_ref()
        .map(|a| a.credential_refs().into_iter().map(|(_, r)| r.clone()).collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fixtures, parse_document};
    use std::io::Write;

    fn write_secrets(dir: &Path, body: &str, mode: u32) -> PathBuf {
        let path = dir.join("secrets.yaml");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(&path, std::fs::Permissions::from_mode(mode)).unwrap();
        }
        let _ = mode;
        path
    }

    #[test]
    fn env_backend_maps_key_to_variable() {
        std::env::set_var("DADL_TEST_TOKEN_A", "t0k");
        let r = CredentialResolver::new(ResolverConfig::standard(None)).unwrap();
        let s = r.resolve(&CredentialRef::new("env/DADL_TEST_TOKEN_A")).unwrap();
        assert_eq!(s.expose(), b"t0k");
        assert_eq!(s.resolved_from.as_str(), "env/DADL_TEST_TOKEN_A");
        assert!(!format!("{s:?}").contains("t0k"));
    }

    #[test]
    fn unknown_namespace_and_missing_secret() {
        let r = CredentialResolver::new(ResolverConfig::standard(None)).unwrap();
        assert_eq!(
            r.resolve(&CredentialRef::new("vault/my-api-token")).unwrap_err(),
            CredentialError::UnknownNamespace { reference: "vault/my-api-token".into(), namespace: "vault".into() }
        );
        assert!(matches!(
            r.resolve(&CredentialRef::new("env/DADL_TEST_SURELY_UNSET_9")),
            Err(CredentialError::MissingSecret { .. })
        ));
        assert!(matches!(r.resolve(&CredentialRef::new("nonamespace")), Err(CredentialError::Malformed(_))));
    }

    #[test]
    fn duplicate_namespaces_rejected() {
        let cfg = ResolverConfig::default().with_static("a", &[]).with_static("a", &[]);
        assert!(matches!(CredentialResolver::new(cfg), Err(CredentialError::Config(_))));
    }

    #[test]
    fn file_backend_rotation_without_restart() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_secrets(dir.path(), "token: first\n", 0o600);
        let r = CredentialResolver::new(ResolverConfig::default().with_file("vault", &path)).unwrap();
        let reference = CredentialRef::new("vault/token");
        assert_eq!(r.resolve(&reference).unwrap().expose(), b"first");
        assert_eq!(r.resolve(&reference).unwrap().expose(), b"first");
        write_secrets(dir.path(), "token: second-value\n", 0o600);
        assert_eq!(r.resolve(&reference).unwrap().expose(), b"second-value");
    }

    #[cfg(unix)]
    #[test]
    fn group_readable_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_secrets(dir.path(), "token: s3cr3t-value\n", 0o640);
        let r = CredentialResolver::new(ResolverConfig::default().with_file("vault", &path)).unwrap();
        let err = r.resolve(&CredentialRef::new("vault/token")).unwrap_err();
        assert!(matches!(err, CredentialError::FilePermissionError { mode: 0o640, .. }));
        assert!(!err.to_string().contains("s3cr3t-value"));
    }

    #[test]
    fn malformed_file_errors_do_not_quote_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_secrets(dir.path(), "token: [s3cr3t-value]\n", 0o600);
        let r = CredentialResolver::new(ResolverConfig::default().with_file("vault", &path)).unwrap();
        let err = r.resolve(&CredentialRef::new("vault/token")).unwrap_err().to_string();
        assert!(!err.contains("s3cr3t"), "{err}");
    }

    #[test]
    fn list_refs_for_reference_documents() {
        let doc = parse_document(fixtures::MY_API).unwrap();
        assert_eq!(list_refs(&doc), [CredentialRef::new("vault/my-api-token")].into());
        let basic = parse_document(
            "backend: {name: b, type: rest, base_url: 'https://x.example'}\nauth: {type: basic, username: env/U, password: env/P}\ntools: {}\n",
        )
        .unwrap();
        assert_eq!(list_refs(&basic), [CredentialRef::new("env/P"), CredentialRef::new("env/U")].into());
        let oauth = parse_document(
            "backend: {name: o, type: rest, base_url: 'https://x.example'}\nauth: {type: oauth2_client_credentials, token_url: 'https://x.example/token', client_id: vault/cid, client_secret: vault/cs}\ntools: {}\n",
        )
        .unwrap();
        assert_eq!(list_refs(&oauth), [CredentialRef::new("vault/cid"), CredentialRef::new("vault/cs")].into());
    }
}
