use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DenseIndex, HybridIndex, IndexConfig, IndexError, IndexedChunk, LexicalIndex};
use crate::corpus::ChunkConfig;

pub const FORMAT_VERSION: u32 = 1;

const META_FILE: &str = "meta.json";
const LEXICAL_FILE: &str = "lexical.bin";
const DENSE_FILE: &str = "dense.bin";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnMeta {
    pub m: usize,
    pub ef_c: usize,
    pub ef_s: usize,
}

/// Contents of `meta.json`. Checksums are hex SHA-256 keyed by file name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub format_version: u32,
    pub dim: usize,
    pub k1: f64,
    pub b: f64,
    pub rrf_c: f64,
    pub ann: AnnMeta,
    pub chunk: ChunkConfig,
    pub checksums: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct LexicalFile {
    format_version: u32,
    chunks: Vec<IndexedChunk>,
    lexical: LexicalIndex,
}

#[derive(Serialize, Deserialize)]
struct DenseFile {
    format_version: u32,
    dense: DenseIndex,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IndexError + '_ {
    move |source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IndexError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl HybridIndex {
    pub fn index_dir(kb: &Path) -> PathBuf {
        kb.join("index")
    }

    pub fn meta(&self) -> IndexMeta {
        let ann = self.config.ann;
        IndexMeta {
            format_version: FORMAT_VERSION,
            dim: self.dim(),
            k1: self.config.k1,
            b: self.config.b,
            rrf_c: self.config.rrf_c,
            ann: AnnMeta {
                m: ann.m,
                ef_c: ann.ef_c,
                ef_s: ann.ef_s,
            },
            chunk: self.config.chunk,
            checksums: BTreeMap::new(),
        }
    }

    /// Write `meta.json`, `lexical.bin` and `dense.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<IndexMeta, IndexError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let lexical = bincode::serialize(&LexicalFile {
            format_version: FORMAT_VERSION,
            chunks: self.chunks.clone(),
            lexical: self.lexical.clone(),
        })
        .map_err(|e| IndexError::CorruptIndex(e.to_string()))?;
        let dense = bincode::serialize(&DenseFile {
            format_version: FORMAT_VERSION,
            dense: self.dense.clone(),
        })
        .map_err(|e| IndexError::CorruptIndex(e.to_string()))?;

        let mut meta = self.meta();
        meta.checksums.insert(LEXICAL_FILE.into(), sha256_hex(&lexical));
        meta.checksums.insert(DENSE_FILE.into(), sha256_hex(&dense));

        write_atomic(&dir.join(LEXICAL_FILE), &lexical)?;
        write_atomic(&dir.join(DENSE_FILE), &dense)?;
        let json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
        write_atomic(&dir.join(META_FILE), &json)?;
        Ok(meta)
    }

    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        let meta_path = dir.join(META_FILE);
        let raw = fs::read(&meta_path).map_err(io_err(&meta_path))?;
        let value: serde_json::Value =
            serde_json::from_slice(&raw).map_err(|e| IndexError::CorruptIndex(format!("{META_FILE}: {e}")))?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| IndexError::CorruptIndex(format!("{META_FILE}: missing format_version")))?;
        if found != FORMAT_VERSION as u64 {
            return Err(IndexError::FormatVersionMismatch {
                found: found as u32,
                expected: FORMAT_VERSION,
            });
        }
        let meta: IndexMeta =
            serde_json::from_value(value).map_err(|e| IndexError::CorruptIndex(format!("{META_FILE}: {e}")))?;

        let lexical_bytes = read_checked(dir, LEXICAL_FILE, &meta)?;
        let dense_bytes = read_checked(dir, DENSE_FILE, &meta)?;
        let lexical: LexicalFile = bincode::deserialize(&lexical_bytes)
            .map_err(|e| IndexError::CorruptIndex(format!("{LEXICAL_FILE}: {e}")))?;
        let dense: DenseFile =
            bincode::deserialize(&dense_bytes).map_err(|e| IndexError::CorruptIndex(format!("{DENSE_FILE}: {e}")))?;
        for v in [lexical.format_version, dense.format_version] {
            if v != FORMAT_VERSION {
                return Err(IndexError::FormatVersionMismatch {
                    found: v,
                    expected: FORMAT_VERSION,
                });
            }
        }
        let ann = dense.dense.params();
        if dense.dense.dim() != meta.dim
            || lexical.chunks.len() != dense.dense.len()
            || (ann.m, ann.ef_c, ann.ef_s) != (meta.ann.m, meta.ann.ef_c, meta.ann.ef_s)
        {
            return Err(IndexError::CorruptIndex("index files disagree with meta.json".into()));
        }
        Ok(Self {
            config: IndexConfig {
                k1: meta.k1,
                b: meta.b,
                rrf_c: meta.rrf_c,
                ann,
                chunk: meta.chunk,
            },
            chunks: lexical.chunks,
            lexical: lexical.lexical,
            dense: dense.dense,
        })
    }
}

fn read_checked(dir: &Path, name: &str, meta: &IndexMeta) -> Result<Vec<u8>, IndexError> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let expected = meta
        .checksums
        .get(name)
        .ok_or_else(|| IndexError::CorruptIndex(format!("no checksum recorded for {name}")))?;
    if &sha256_hex(&bytes) != expected {
        return Err(IndexError::CorruptIndex(format!("checksum mismatch for {name}")));
    }
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::exec::Execution;
    use crate::ports::HashEmbedder;

    fn built() -> HybridIndex {
        let docs: Vec<Document> = (0..6)
            .map(|i| Document::new(format!("d{i}"), 1, format!("alpha beta {i} gamma word{}", i % 3)))
            .collect();
        HybridIndex::build(&docs, IndexConfig::default(), &HashEmbedder::default()).unwrap()
    }

    #[test]
    fn round_trip_answers_identically() {
        let dir = tempfile::tempdir().unwrap();
        let idx = built();
        idx.save(dir.path()).unwrap();
        let back = HybridIndex::load(dir.path()).unwrap();
        assert_eq!(idx, back);
        let e = HashEmbedder::default();
        for q in ["alpha", "word1 gamma", "3", "missing"] {
            assert_eq!(
                idx.search_hybrid(q, &e, 8, Execution::Sequential).unwrap(),
                back.search_hybrid(q, &e, 8, Execution::Sequential).unwrap()
            );
        }
    }

    #[test]
    fn meta_keys_are_fixed() {
        let dir = tempfile::tempdir().unwrap();
        built().save(dir.path()).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join(META_FILE)).unwrap()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["format_version", "dim", "k1", "b", "rrf_c", "ann", "chunk", "checksums"] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert_eq!(v["ann"]["ef_s"], 128);
        assert_eq!(v["chunk"]["overlap"], 150);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        built().save(dir.path()).unwrap();
        let p = dir.path().join(DENSE_FILE);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(HybridIndex::load(dir.path()), Err(IndexError::CorruptIndex(_))));
    }

    #[test]
    fn older_format_rejected() {
        let dir = tempfile::tempdir().unwrap();
        built().save(dir.path()).unwrap();
        let p = dir.path().join(META_FILE);
        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&p).unwrap()).unwrap();
        v["format_version"] = 0.into();
        fs::write(&p, serde_json::to_vec(&v).unwrap()).unwrap();
        assert!(matches!(
            HybridIndex::load(dir.path()),
            Err(IndexError::FormatVersionMismatch { found: 0, .. })
        ));
    }
}
