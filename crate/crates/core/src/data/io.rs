//! JSONL persistence: one record per line, UTF-8.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{I2TRecord, RawCaptionRecord};
use crate::error::{DeclipError, Result};

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| DeclipError::MalformedLine {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Parses a dataset, checking every record and `image_ref` uniqueness.
pub fn parse_dataset(text: &str) -> Result<Vec<I2TRecord>> {
    let records: Vec<I2TRecord> = parse_jsonl(text)?;
    check_dataset(&records)?;
    Ok(records)
}

pub fn check_dataset(records: &[I2TRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in records {
        r.validate()?;
        if !seen.insert(r.image_ref.as_str()) {
            return Err(DeclipError::DuplicateImageRef(r.image_ref.clone()));
        }
    }
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<I2TRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DeclipError::io(path, e))?;
    parse_dataset(&text)
}

pub fn save_dataset(records: &[I2TRecord], path: impl AsRef<Path>) -> Result<()> {
    check_dataset(records)?;
    write_jsonl(records, path.as_ref())
}

pub fn load_raw_captions(path: impl AsRef<Path>) -> Result<Vec<RawCaptionRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DeclipError::io(path, e))?;
    let records: Vec<RawCaptionRecord> = parse_jsonl(&text)?;
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| DeclipError::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
    }
    Ok(records)
}

pub fn save_raw_captions(records: &[RawCaptionRecord], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(records, path.as_ref())
}

pub(crate) fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| DeclipError::io(path, e))?;
    file.write_all(to_jsonl(records).as_bytes())
        .map_err(|e| DeclipError::io(path, e))
}
