//! Multi-matrix container used to persist fitted models.
//!
//! Layout: magic `MBEC`, version u16 = 1, reserved u16 = 0, index length
//! u64, a UTF-8 JSON index, then the concatenated `MBEM` matrix blobs. The
//! index names every blob with its byte offset (relative to the end of the
//! index) and length, and carries free-form metadata.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::io::{decode_binary, encode_binary, write_bytes, Dtype};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MBEC";
const VERSION: u16 = 1;
const PREFIX_LEN: usize = 16;

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    meta: Value,
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    offset: u64,
    length: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    meta: Value,
    entries: Vec<(String, Array2<f64>)>,
}

impl Container {
    pub fn new(meta: Value) -> Self {
        Self {
            meta,
            entries: Vec::new(),
        }
    }

    pub fn meta(&self) -> &Value {
        &self.meta
    }

    pub fn push(&mut self, name: impl Into<String>, m: Array2<f64>) {
        self.entries.push((name.into(), m));
    }

    /// Nest `other` under `prefix`: its entries become `prefix.name` and its
    /// meta is stored at `meta[prefix]`. The outer meta must be an object.
    pub fn embed(&mut self, prefix: &str, other: &Container) {
        if let Value::Object(map) = &mut self.meta {
            map.insert(prefix.to_string(), other.meta.clone());
        }
        for (name, m) in &other.entries {
            self.entries.push((format!("{prefix}.{name}"), m.clone()));
        }
    }

    /// Inverse of [`Container::embed`].
    pub fn extract(&self, prefix: &str) -> Result<Container> {
        let meta = self
            .meta
            .get(prefix)
            .cloned()
            .ok_or_else(|| Error::Container(format!("no nested container {prefix:?}")))?;
        let lead = format!("{prefix}.");
        let entries = self
            .entries
            .iter()
            .filter_map(|(n, m)| n.strip_prefix(&lead).map(|rest| (rest.to_string(), m.clone())))
            .collect();
        Ok(Container { meta, entries })
    }

    pub fn push_vector(&mut self, name: impl Into<String>, v: &Array1<f64>) {
        let row = v.clone().insert_axis(ndarray::Axis(0));
        self.push(name, row);
    }

    pub fn get(&self, name: &str) -> Result<&Array2<f64>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Container(format!("missing entry {name:?}")))
    }

    pub fn get_vector(&self, name: &str) -> Result<Array1<f64>> {
        let m = self.get(name)?;
        if m.nrows() != 1 {
            return Err(Error::Container(format!(
                "entry {name:?} is {}x{}, expected a single row",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m.row(0).to_owned())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut blobs = Vec::new();
        let mut entries = Vec::with_capacity(self.entries.len());
        for (name, m) in &self.entries {
            let blob = encode_binary(m.view(), Dtype::F64);
            entries.push(IndexEntry {
                name: name.clone(),
                offset: blobs.len() as u64,
                length: blob.len() as u64,
            });
            blobs.extend_from_slice(&blob);
        }
        let index = serde_json::to_vec(&Index {
            meta: self.meta.clone(),
            entries,
        })
        .expect("index serializes");
        let mut out = Vec::with_capacity(PREFIX_LEN + index.len() + blobs.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(index.len() as u64).to_le_bytes());
        out.extend_from_slice(&index);
        out.extend_from_slice(&blobs);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREFIX_LEN || &bytes[0..4] != MAGIC {
            return Err(Error::Container("not a matrix container".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let index_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[PREFIX_LEN..];
        if index_len > body.len() {
            return Err(Error::Container("index extends past end of file".into()));
        }
        let index: Index = serde_json::from_slice(&body[..index_len])?;
        let blobs = &body[index_len..];
        let mut entries = Vec::with_capacity(index.entries.len());
        for e in index.entries {
            let start = e.offset as usize;
            let end = start
                .checked_add(e.length as usize)
                .filter(|&end| end <= blobs.len())
                .ok_or_else(|| Error::Container(format!("entry {:?} out of bounds", e.name)))?;
            entries.push((e.name, decode_binary(&blobs[start..end])?));
        }
        Ok(Self {
            meta: index.meta,
            entries,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
