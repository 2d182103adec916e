use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{is_valid_doc_id, normalize_acl, CorpusError, Document, RawDocument};

/// One line of `<kb>/audit.log`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub op: String,
    pub doc_id: String,
    pub version: u32,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub document: Document,
    /// True when this ingest produced version 1.
    pub created: bool,
}

/// Append-only document store rooted at a knowledge-base directory.
///
/// Layout: `<kb>/docs/<doc_id>/<version>.json` plus `<kb>/audit.log`.
/// Writes are serialized through a mutex; a version file is published with
/// a hard link so an existing version can never be clobbered.
#[derive(Debug)]
pub struct VersionStore {
    root: PathBuf,
    writer: Mutex<()>,
}

impl VersionStore {
    pub fn open(kb: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let root = kb.as_ref().to_path_buf();
        let docs = root.join("docs");
        fs::create_dir_all(&docs).map_err(|source| CorpusError::StoreWrite {
            path: docs.clone(),
            source,
        })?;
        Ok(Self {
            root,
            writer: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn audit_path(&self) -> PathBuf {
        self.root.join("audit.log")
    }

    fn doc_dir(&self, doc_id: &str) -> PathBuf {
        self.root.join("docs").join(doc_id)
    }

    fn version_path(&self, doc_id: &str, version: u32) -> PathBuf {
        self.doc_dir(doc_id).join(format!("{version}.json"))
    }

    pub fn ingest(&self, raw: RawDocument) -> Result<IngestOutcome, CorpusError> {
        if !is_valid_doc_id(&raw.id) {
            return Err(CorpusError::InvalidDocId(raw.id));
        }
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let next = self.versions(&raw.id)?.last().copied().unwrap_or(0) + 1;
        let doc = Document {
            doc_id: raw.id,
            version: next,
            text: raw.text,
            mime: raw.mime,
            author: raw.author,
            created_at: raw.created_at.unwrap_or_else(now_iso),
            acl: normalize_acl(raw.acl.into_iter().collect()),
        };
        self.publish(&doc, "ingest")?;
        Ok(IngestOutcome {
            created: next == 1,
            document: doc,
        })
    }

    /// Re-publish an older version's content as a new version.
    pub fn rollback(&self, doc_id: &str, target: u32) -> Result<Document, CorpusError> {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let old = self.get(doc_id, target)?;
        let latest = self.versions(doc_id)?.last().copied().unwrap_or(0);
        let doc = Document {
            version: latest + 1,
            created_at: now_iso(),
            ..old
        };
        self.publish(&doc, "rollback")?;
        Ok(doc)
    }

    fn publish(&self, doc: &Document, op: &str) -> Result<(), CorpusError> {
        let dir = self.doc_dir(&doc.doc_id);
        let write_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CorpusError::StoreWrite { path, source }
        };
        fs::create_dir_all(&dir).map_err(write_err(&dir))?;
        let final_path = self.version_path(&doc.doc_id, doc.version);
        let tmp = dir.join(format!(".{}.tmp", doc.version));
        let body = serde_json::to_vec_pretty(doc).expect("document serializes");
        fs::write(&tmp, body).map_err(write_err(&tmp))?;
        let linked = fs::hard_link(&tmp, &final_path).map_err(write_err(&final_path));
        let _ = fs::remove_file(&tmp);
        linked?;

        let record = AuditRecord {
            op: op.to_string(),
            doc_id: doc.doc_id.clone(),
            version: doc.version,
            timestamp: now_iso(),
        };
        let audit = self.audit_path();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&audit)
            .map_err(write_err(&audit))?;
        let mut line = serde_json::to_string(&record).expect("audit record serializes");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(write_err(&audit))?;
        Ok(())
    }

    /// Stored versions in ascending order (empty if the document is unknown).
    pub fn versions(&self, doc_id: &str) -> Result<Vec<u32>, CorpusError> {
        let dir = self.doc_dir(doc_id);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let entries = fs::read_dir(&dir).map_err(|source| CorpusError::StoreRead {
            path: dir.clone(),
            source,
        })?;
        let mut versions: Vec<u32> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json")?.parse().ok()
            })
            .collect();
        versions.sort_unstable();
        Ok(versions)
    }

    pub fn get(&self, doc_id: &str, version: u32) -> Result<Document, CorpusError> {
        let path = self.version_path(doc_id, version);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CorpusError::VersionNotFound {
                    doc_id: doc_id.to_string(),
                    version,
                })
            }
            Err(source) => return Err(CorpusError::StoreRead { path, source }),
        };
        serde_json::from_slice(&bytes).map_err(|e| CorpusError::Corrupt {
            path,
            message: e.to_string(),
        })
    }

    pub fn latest(&self, doc_id: &str) -> Result<Document, CorpusError> {
        match self.versions(doc_id)?.last() {
            Some(&v) => self.get(doc_id, v),
            None => Err(CorpusError::DocumentNotFound(doc_id.to_string())),
        }
    }

    pub fn doc_ids(&self) -> Result<Vec<String>, CorpusError> {
        let dir = self.root.join("docs");
        let entries = fs::read_dir(&dir).map_err(|source| CorpusError::StoreRead {
            path: dir.clone(),
            source,
        })?;
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// Latest version of every document, ordered by doc id.
    pub fn latest_documents(&self) -> Result<Vec<Document>, CorpusError> {
        self.doc_ids()?.iter().map(|id| self.latest(id)).collect()
    }

    /// Line-based unified diff from version `from` to version `to`.
    pub fn diff(&self, doc_id: &str, from: u32, to: u32) -> Result<String, CorpusError> {
        let a = self.get(doc_id, from)?;
        let b = self.get(doc_id, to)?;
        if a.text == b.text {
            return Ok(String::new());
        }
        Ok(similar::TextDiff::from_lines(&a.text, &b.text)
            .unified_diff()
            .header(&format!("{doc_id}@v{from}"), &format!("{doc_id}@v{to}"))
            .to_string())
    }

    pub fn audit_records(&self) -> Result<Vec<AuditRecord>, CorpusError> {
        let path = self.audit_path();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(CorpusError::StoreRead { path, source }),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l).map_err(|e| CorpusError::Corrupt {
                    path: path.clone(),
                    message: e.to_string(),
                })
            })
            .collect()
    }
}

fn now_iso() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
