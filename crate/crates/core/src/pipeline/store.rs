//! Self-describing feature files: a UTF-8 header of `key value` lines ended by
//! a blank line, then `count` records of
//! `u32 LE id length | id bytes | dim × f32 LE`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::config::StoreKind;
use crate::error::{Error, Result};

const MAGIC: &str = "ccf-features 1";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    pub kind: StoreKind,
    pub dim: usize,
    pub config_hash: String,
    /// Free-form provenance (codebook digest, backend fingerprint, ...).
    pub meta: BTreeMap<String, String>,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl FeatureStore {
    pub fn new(kind: StoreKind, dim: usize, config_hash: impl Into<String>) -> Self {
        FeatureStore {
            kind,
            dim,
            config_hash: config_hash.into(),
            meta: BTreeMap::new(),
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn push(&mut self, id: &str, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        if id.is_empty() || id.contains('\n') {
            return Err(Error::InvalidInput(format!("invalid store id {id:?}")));
        }
        if self.index.contains_key(id) {
            return Err(Error::InvalidInput(format!("duplicate store id `{id}`")));
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    /// Rows for `ids` in the given order.
    pub fn matrix(&self, ids: &[&str]) -> Result<Array2<f64>> {
        let mut m = Array2::zeros((ids.len(), self.dim));
        for (r, id) in ids.iter().enumerate() {
            let row = self
                .get(id)
                .ok_or_else(|| Error::InvalidInput(format!("{} store has no row `{id}`", self.kind)))?;
            for (dst, &v) in m.row_mut(r).iter_mut().zip(row) {
                *dst = f64::from(v);
            }
        }
        Ok(m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(256 + self.data.len() * 4 + self.ids.len() * 16);
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "kind {}", self.kind).unwrap();
        writeln!(out, "dim {}", self.dim).unwrap();
        writeln!(out, "count {}", self.ids.len()).unwrap();
        writeln!(out, "config_hash {}", self.config_hash).unwrap();
        for (k, v) in &self.meta {
            writeln!(out, "meta {k} {v}").unwrap();
        }
        out.push(b'\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in self.row(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    /// Writes through a temporary file so readers never see a partial store.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|(line, msg)| Error::parse(path, line, msg))
    }

    fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, (usize, String)> {
        let mut pos = 0;
        let mut line_no = 0;
        let mut next_line = |pos: &mut usize| -> std::result::Result<String, (usize, String)> {
            line_no += 1;
            let end = bytes[*pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or((line_no, "unterminated header".to_string()))?;
            let line = std::str::from_utf8(&bytes[*pos..*pos + end])
                .map_err(|_| (line_no, "header is not UTF-8".to_string()))?
                .to_string();
            *pos += end + 1;
            Ok(line)
        };
        if next_line(&mut pos)? != MAGIC {
            return Err((1, "not a feature store".into()));
        }
        let (mut kind, mut dim, mut count, mut hash) = (None, None, None, None);
        let mut meta = BTreeMap::new();
        let mut header_lines = 1;
        loop {
            let line = next_line(&mut pos)?;
            header_lines += 1;
            if line.is_empty() {
                break;
            }
            let (key, value) = line
                .split_once(' ')
                .ok_or((header_lines, format!("malformed header line `{line}`")))?;
            let bad = || (header_lines, format!("bad value for `{key}`"));
            match key {
                "kind" => kind = Some(value.parse::<StoreKind>().map_err(|_| bad())?),
                "dim" => dim = Some(value.parse::<usize>().map_err(|_| bad())?),
                "count" => count = Some(value.parse::<usize>().map_err(|_| bad())?),
                "config_hash" => hash = Some(value.to_string()),
                "meta" => {
                    let (k, v) = value.split_once(' ').unwrap_or((value, ""));
                    meta.insert(k.to_string(), v.to_string());
                }
                _ => return Err((header_lines, format!("unknown header key `{key}`"))),
            }
        }
        let missing = |k: &str| (header_lines, format!("header lacks `{k}`"));
        let kind = kind.ok_or_else(|| missing("kind"))?;
        let dim = dim.ok_or_else(|| missing("dim"))?;
        let count = count.ok_or_else(|| missing("count"))?;
        let mut store = FeatureStore::new(kind, dim, hash.ok_or_else(|| missing("config_hash"))?);
        store.meta = meta;

        let body_err = |i: usize, what: &str| (header_lines, format!("record {}: {what}", i + 1));
        let mut row = vec![0f32; dim];
        for i in 0..count {
            let len_bytes = bytes.get(pos..pos + 4).ok_or_else(|| body_err(i, "truncated"))?;
            let len = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
            pos += 4;
            let id = bytes.get(pos..pos + len).ok_or_else(|| body_err(i, "truncated id"))?;
            let id = std::str::from_utf8(id).map_err(|_| body_err(i, "id is not UTF-8"))?;
            pos += len;
            let vals = bytes
                .get(pos..pos + 4 * dim)
                .ok_or_else(|| body_err(i, "truncated row"))?;
            for (dst, chunk) in row.iter_mut().zip(vals.chunks_exact(4)) {
                *dst = f32::from_le_bytes(chunk.try_into().unwrap());
            }
            pos += 4 * dim;
            store.push(id, &row).map_err(|e| body_err(i, &e.to_string()))?;
        }
        if pos != bytes.len() {
            return Err((header_lines, format!("{} trailing bytes after {count} records", bytes.len() - pos)));
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureStore {
        let mut s = FeatureStore::new(StoreKind::Bf, 3, "abc").with_meta("backend", "stub-background-v1");
        s.push("img 1", &[1.0, -2.5, 3.25]).unwrap();
        s.push("img2", &[0.0, f32::MAX, 1e-30]).unwrap();
        s
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.ccf");
        let s = sample();
        s.write(&p).unwrap();
        let back = FeatureStore::read(&p).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.get("img2").unwrap()[1], f32::MAX);
        assert_eq!(back.digest(), s.digest());
    }

    #[test]
    fn empty_store_round_trips() {
        let s = FeatureStore::new(StoreKind::Tf, 7, "h");
        assert_eq!(FeatureStore::from_bytes(&s.to_bytes()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_rows() {
        let mut s = sample();
        assert!(s.push("img2", &[0.0; 3]).is_err());
        assert!(s.push("x", &[0.0; 2]).is_err());
    }

    #[test]
    fn detects_corruption() {
        let bytes = sample().to_bytes();
        assert!(FeatureStore::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(FeatureStore::from_bytes(&extra).is_err());
        assert!(FeatureStore::from_bytes(b"nope\n\n").is_err());
    }

    #[test]
    fn matrix_in_requested_order() {
        let m = sample().matrix(&["img2", "img 1"]).unwrap();
        assert_eq!(m[[1, 2]], 3.25);
        assert!(sample().matrix(&["zzz"]).is_err());
    }
}
