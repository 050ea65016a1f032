//! Persistent translation-memory store.
//!
//! A store is an ordered list of records, each a translation unit plus an
//! optional embedding, with a dimension fixed at creation. It lives in memory
//! and is persisted as one file. [`TranslationMemoryStore::save`] writes to a
//! temporary file in the target directory and renames it into place, so a
//! reader opening the path sees either the old or the new file, never a
//! partially written one.
//!
//! # File layout (version 1, all integers little-endian)
//!
//! ```text
//! header, 32 bytes
//!   0  magic      b"TMRS"
//!   4  version    u32 = 1
//!   8  dim        u32
//!  12  reserved   u32 = 0
//!  16  count      u64
//!  24  created    u64, unix seconds
//! vector section, `count` fixed-width records of 16 + 4*dim bytes, id order
//!   0  id         u64
//!   8  flags      u32, bit 0 set when the record has a vector
//!  12  reserved   u32 = 0
//!  16  values     dim x f32 (zeros when flag bit 0 is clear)
//! text section
//!   store source_lang, store target_lang,
//!   then per record: source, target, source_lang, target_lang
//!   each string as u32 byte length followed by UTF-8 bytes
//! ```
//!
//! Vectors are persisted in single precision.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};
use crate::unit::{LanguagePair, TranslationUnit};

pub const MAGIC: &[u8; 4] = b"TMRS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub unit: TranslationUnit,
    pub vector: Option<EmbeddingVector>,
}

impl MemoryRecord {
    pub fn new(unit: TranslationUnit, vector: Option<EmbeddingVector>) -> Self {
        Self { unit, vector }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMetadata {
    pub langs: LanguagePair,
    pub created_unix: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationMemoryStore {
    dim: usize,
    metadata: StoreMetadata,
    records: Vec<MemoryRecord>,
}

impl TranslationMemoryStore {
    pub fn new(dim: usize, langs: LanguagePair) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::Argument(format!("invalid store dimension {dim}")));
        }
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(Self {
            dim,
            metadata: StoreMetadata {
                langs,
                created_unix,
            },
            records: Vec::new(),
        })
    }

    /// Store holding `units` without vectors.
    pub fn from_units(units: Vec<TranslationUnit>, dim: usize, langs: LanguagePair) -> Result<Self> {
        let mut store = Self::new(dim, langs)?;
        for unit in units {
            store.put(MemoryRecord::new(unit, None))?;
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metadata(&self) -> &StoreMetadata {
        &self.metadata
    }

    pub fn set_created_unix(&mut self, secs: u64) {
        self.metadata.created_unix = secs;
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record. Ids must be strictly increasing and any vector must
    /// have the store's dimension.
    pub fn put(&mut self, record: MemoryRecord) -> Result<()> {
        if let Some(v) = &record.vector {
            if v.dim() != self.dim {
                return Err(Error::Dimension {
                    expected: self.dim,
                    got: v.dim(),
                });
            }
        }
        if let Some(last) = self.records.last() {
            if record.unit.id <= last.unit.id {
                return Err(Error::Conflict(record.unit.id));
            }
        }
        self.records.push(record);
        Ok(())
    }

    /// Attaches (or replaces) the vector of an existing record.
    pub fn set_vector(&mut self, id: u64, vector: EmbeddingVector) -> Result<()> {
        if vector.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        let pos = self.position(id).ok_or_else(|| {
            Error::Argument(format!("no record with id {id}"))
        })?;
        self.records[pos].vector = Some(vector);
        Ok(())
    }

    fn position(&self, id: u64) -> Option<usize> {
        self.records
            .binary_search_by_key(&id, |r| r.unit.id)
            .ok()
    }

    pub fn get(&self, id: u64) -> Option<&MemoryRecord> {
        self.position(id).map(|p| &self.records[p])
    }

    /// Records in id order.
    pub fn scan(&self) -> std::slice::Iter<'_, MemoryRecord> {
        self.records.iter()
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    pub fn units(&self) -> impl Iterator<Item = &TranslationUnit> {
        self.records.iter().map(|r| &r.unit)
    }

    pub fn has_all_vectors(&self) -> bool {
        self.records.iter().all(|r| r.vector.is_some())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let record_len = 16 + 4 * self.dim;
        let mut buf = Vec::with_capacity(HEADER_LEN + self.records.len() * (record_len + 64));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        buf.extend_from_slice(&self.metadata.created_unix.to_le_bytes());

        for record in &self.records {
            buf.extend_from_slice(&record.unit.id.to_le_bytes());
            let flags: u32 = u32::from(record.vector.is_some());
            buf.extend_from_slice(&flags.to_le_bytes());
            buf.extend_from_slice(&0u32.to_le_bytes());
            match &record.vector {
                Some(v) => {
                    for x in v.to_f32() {
                        buf.extend_from_slice(&x.to_le_bytes());
                    }
                }
                None => buf.resize(buf.len() + 4 * self.dim, 0),
            }
        }

        put_str(&mut buf, &self.metadata.langs.source);
        put_str(&mut buf, &self.metadata.langs.target);
        for record in &self.records {
            let u = &record.unit;
            put_str(&mut buf, &u.source_text);
            put_str(&mut buf, &u.target_text);
            put_str(&mut buf, &u.source_lang);
            put_str(&mut buf, &u.target_lang);
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::Format("zero dimension".into()));
        }
        let _reserved = r.u32()?;
        let count = r.u64()? as usize;
        let created_unix = r.u64()?;

        let record_len = 16 + 4 * dim;
        if count.checked_mul(record_len).map_or(true, |n| n > bytes.len()) {
            return Err(Error::Format(format!("count {count} exceeds file size")));
        }
        let mut heads = Vec::with_capacity(count);
        for _ in 0..count {
            let id = r.u64()?;
            let flags = r.u32()?;
            let _reserved = r.u32()?;
            let raw = r.take(4 * dim)?;
            let vector = if flags & 1 == 1 {
                let values: Vec<f32> = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                Some(EmbeddingVector::from_f32(&values).map_err(|e| Error::Format(e.to_string()))?)
            } else {
                None
            };
            heads.push((id, vector));
        }

        let langs = LanguagePair::new(r.string()?, r.string()?);
        let mut store = TranslationMemoryStore {
            dim,
            metadata: StoreMetadata {
                langs,
                created_unix,
            },
            records: Vec::with_capacity(count),
        };
        for (id, vector) in heads {
            let unit = TranslationUnit {
                id,
                source_text: r.string()?,
                target_text: r.string()?,
                source_lang: r.string()?,
                target_lang: r.string()?,
            };
            store
                .put(MemoryRecord::new(unit, vector))
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(store)
    }

    /// Atomically replaces the file at `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        {
            let mut w = BufWriter::new(tmp.as_file());
            w.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    pub fn open(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
}
