use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use parking_lot::Mutex;
use serde::Serialize;

use super::DecisionKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Primitive,
    Composite,
    Script,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Error,
    Denied,
}

/// One audit event. Carries the credential ref only, never its value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRecord {
    #[serde(serialize_with = "rfc3339")]
    pub timestamp: DateTime<Utc>,
    pub kind: RecordKind,
    pub principal: String,
    pub backend: String,
    pub tool: String,
    pub access: String,
    pub decision: DecisionKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_context: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub credential_ref: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upstream_status: Option<u16>,
    pub attempts: u32,
    pub pages: u32,
    pub request_bytes: u64,
    pub response_bytes: u64,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub duration_ms: u64,
}

fn rfc3339<S: serde::Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Millis, true))
}

impl AuditRecord {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("audit record serializes");
        line.push('\n');
        line
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("audit sink unavailable: {0}")]
pub struct SinkUnavailable(pub String);

pub trait AuditSink: Send + Sync {
    fn record(&self, rec: &AuditRecord) -> Result<(), SinkUnavailable>;
}

/// Appends NDJSON to a file, flushing after every record.
pub struct FileSink {
    path: PathBuf,
    file: Mutex<File>,
}

impl FileSink {
    pub fn open(path: &Path) -> Result<Self, SinkUnavailable> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| SinkUnavailable(format!("{}: {e}", path.display())))?;
        Ok(FileSink { path: path.to_path_buf(), file: Mutex::new(file) })
    }
}

impl AuditSink for FileSink {
    fn record(&self, rec: &AuditRecord) -> Result<(), SinkUnavailable> {
        let line = rec.to_line();
        let mut f = self.file.lock();
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| SinkUnavailable(format!("{}: {e}", self.path.display())))
    }
}

pub struct StderrSink;

impl AuditSink for StderrSink {
    fn record(&self, rec: &AuditRecord) -> Result<(), SinkUnavailable> {
        let line = rec.to_line();
        let mut err = std::io::stderr().lock();
        err.write_all(line.as_bytes()).and_then(|_| err.flush()).map_err(|e| SinkUnavailable(e.to_string()))
    }
}

/// Keeps records in memory; used by tests and the CLI summary.
#[derive(Default)]
pub struct MemorySink {
    records: Mutex<Vec<AuditRecord>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.records.lock().clone()
    }

    pub fn take(&self) -> Vec<AuditRecord> {
        std::mem::take(&mut *self.records.lock())
    }
}

impl AuditSink for MemorySink {
    fn record(&self, rec: &AuditRecord) -> Result<(), SinkUnavailable> {
        self.records.lock().push(rec.clone());
        Ok(())
    }
}

/// Writes every record to each inner sink; fails if any does.
pub struct TeeSink(pub Vec<std::sync::Arc<dyn AuditSink>>);

impl AuditSink for TeeSink {
    fn record(&self, rec: &AuditRecord) -> Result<(), SinkUnavailable> {
        let mut failure = None;
        for sink in &self.0 {
            if let Err(e) = sink.record(rec) {
                failure = Some(e);
            }
        }
        failure.map_or(Ok(()), Err)
    }
}

/// A sink that always fails, for exercising sink-failure handling.
pub struct BrokenSink;

impl AuditSink for BrokenSink {
    fn record(&self, _: &AuditRecord) -> Result<(), SinkUnavailable> {
        Err(SinkUnavailable("sink is closed".into()))
    }
}
