//! Precomputed embedding store.
//!
//! File layout: a header line `DECLIP-EMB v1 dim=<D> count=<N>`, then `N`
//! lines `key<TAB>base64(f32 little-endian x D)`. Text embeddings live in
//! the same store under keys prefixed with `text:`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;

use super::{BackendKind, EncoderMetadata};
use crate::embedding::EmbeddingVector;
use crate::error::{DeclipError, Result};

const MAGIC: &str = "DECLIP-EMB";
const VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<String, Vec<f32>>,
    source: Option<PathBuf>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
            source: None,
        }
    }

    pub fn text_key(text: &str) -> String {
        format!("text:{text}")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: impl Into<String>, values: Vec<f32>) -> Result<()> {
        let key = key.into();
        if values.len() != self.dim {
            return Err(DeclipError::DimensionMismatch {
                expected: self.dim,
                actual: values.len(),
            });
        }
        if key.is_empty() || key.contains(['\t', '\n', '\r']) {
            return Err(DeclipError::InvalidConfig(format!(
                "store key {key:?} must be non-empty and free of tabs and newlines"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DeclipError::NonFinite(format!("store row `{key}`")));
        }
        self.entries.insert(key, values);
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    /// Normalized copy of the stored row; the store itself is never touched.
    pub fn lookup(&self, key: &str) -> Result<EmbeddingVector> {
        let row = self
            .entries
            .get(key)
            .ok_or_else(|| DeclipError::UnknownKey(key.to_string()))?;
        if row.len() != self.dim {
            return Err(DeclipError::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        EmbeddingVector::from_f32(row)
    }

    pub fn metadata(&self) -> EncoderMetadata {
        EncoderMetadata {
            kind: BackendKind::PrecomputedStore,
            id: self
                .source
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "in-memory".into()),
            version: VERSION.into(),
            dim: self.dim,
            seed: None,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION} dim={} count={}\n", self.dim, self.len());
        for (key, row) in &self.entries {
            let bytes: Vec<u8> = row.iter().flat_map(|v| v.to_le_bytes()).collect();
            let _ = writeln!(out, "{key}\t{}", STANDARD.encode(bytes));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| DeclipError::Corrupt("empty embedding store".into()))?;
        let (dim, count) = parse_header(header)?;
        let mut store = Self::new(dim);
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.is_empty() {
                continue;
            }
            let malformed = |reason: String| DeclipError::MalformedLine {
                line: line_no,
                reason,
            };
            let (key, payload) = line
                .split_once('\t')
                .ok_or_else(|| malformed("missing tab separator".into()))?;
            let bytes = STANDARD
                .decode(payload.trim_end())
                .map_err(|e| malformed(format!("invalid base64: {e}")))?;
            if bytes.len() != dim * 4 {
                return Err(malformed(format!(
                    "row has {} bytes, expected {} for dim={dim}",
                    bytes.len(),
                    dim * 4
                )));
            }
            let row: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if store.entries.contains_key(key) {
                return Err(malformed(format!("duplicate key `{key}`")));
            }
            store
                .insert(key, row)
                .map_err(|e| malformed(e.to_string()))?;
        }
        if store.len() != count {
            return Err(DeclipError::Corrupt(format!(
                "header declares {count} records, found {}",
                store.len()
            )));
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DeclipError::io(path, e))?;
        let mut store = Self::parse(&text)?;
        store.source = Some(path.to_path_buf());
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| DeclipError::io(path, e))
    }
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let mut parts = header.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(DeclipError::Corrupt(format!("bad store header `{header}`")));
    }
    let version = parts.next().unwrap_or("");
    if version != VERSION {
        return Err(DeclipError::VersionMismatch {
            expected: VERSION.into(),
            found: version.into(),
        });
    }
    let mut field = |name: &str| -> Result<usize> {
        parts
            .next()
            .and_then(|p| p.strip_prefix(name))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| DeclipError::Corrupt(format!("bad store header `{header}`")))
    };
    let dim = field("dim=")?;
    let count = field("count=")?;
    if dim == 0 {
        return Err(DeclipError::Corrupt("store dim must be positive".into()));
    }
    Ok((dim, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingStore {
        let mut s = EmbeddingStore::new(3);
        s.insert("img_001", vec![3.0, 0.0, 4.0]).unwrap();
        s.insert(EmbeddingStore::text_key("Good photo."), vec![1.0, 1.0, 0.0])
            .unwrap();
        s
    }

    #[test]
    fn lookup_normalizes_without_mutating() {
        let s = sample();
        let v = s.lookup("img_001").unwrap();
        assert_eq!(v.values(), &[0.6, 0.0, 0.8]);
        assert_eq!(s.raw("img_001").unwrap(), &[3.0, 0.0, 4.0]);
    }

    #[test]
    fn unknown_key() {
        assert!(matches!(
            sample().lookup("nope"),
            Err(DeclipError::UnknownKey(k)) if k == "nope"
        ));
    }

    #[test]
    fn text_round_trip() {
        let s = sample();
        let parsed = EmbeddingStore::parse(&s.to_text()).unwrap();
        assert_eq!(parsed, s);
        assert!(s.to_text().starts_with("DECLIP-EMB v1 dim=3 count=2\n"));
    }

    #[test]
    fn rejects_wrong_row_length() {
        let mut text = sample().to_text();
        text = text.replace("dim=3", "dim=4");
        let err = EmbeddingStore::parse(&text).unwrap_err();
        assert!(matches!(err, DeclipError::MalformedLine { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_count_mismatch() {
        let text = sample().to_text().replace("count=2", "count=3");
        assert!(matches!(
            EmbeddingStore::parse(&text),
            Err(DeclipError::Corrupt(_))
        ));
    }

    #[test]
    fn rejects_other_versions() {
        let text = sample().to_text().replace(" v1 ", " v2 ");
        assert!(matches!(
            EmbeddingStore::parse(&text),
            Err(DeclipError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn insert_checks_dim() {
        let mut s = EmbeddingStore::new(2);
        assert!(matches!(
            s.insert("a", vec![1.0]),
            Err(DeclipError::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }
}
