//! Shared layout for the binary container files (checkpoints, condition
//! bundles): a magic line, one line of compact JSON metadata, then raw
//! little-endian `f32` blobs.

use sha2::{Digest, Sha256};

use crate::error::{DeclipError, Result};

pub(crate) fn encode(magic: &str, metadata_json: &str, blobs: &[&[f32]]) -> Vec<u8> {
    debug_assert!(!metadata_json.contains('\n'));
    let mut out = Vec::new();
    out.extend_from_slice(magic.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(metadata_json.as_bytes());
    out.push(b'\n');
    for blob in blobs {
        for x in blob.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Splits a container into `(metadata_json, payload)` after checking the magic line.
///
/// `magic_prefix` is the format name without the version (`"DECLIP-CKPT"`);
/// `version` is the only accepted version token (`"v1"`).
pub(crate) fn decode<'a>(
    bytes: &'a [u8],
    magic_prefix: &str,
    version: &str,
) -> Result<(&'a str, &'a [u8])> {
    let (magic, rest) = split_line(bytes)
        .ok_or_else(|| DeclipError::Corrupt("missing header line".into()))?;
    let magic = std::str::from_utf8(magic)
        .map_err(|_| DeclipError::Corrupt("header is not UTF-8".into()))?;
    let mut parts = magic.split(' ');
    if parts.next() != Some(magic_prefix) {
        return Err(DeclipError::Corrupt(format!(
            "expected `{magic_prefix}` header, found `{magic}`"
        )));
    }
    let found = parts.next().unwrap_or("").to_string();
    if found != version || parts.next().is_some() {
        return Err(DeclipError::VersionMismatch {
            expected: version.to_string(),
            found,
        });
    }
    let (meta, payload) = split_line(rest)
        .ok_or_else(|| DeclipError::Corrupt("missing metadata line".into()))?;
    let meta = std::str::from_utf8(meta)
        .map_err(|_| DeclipError::Corrupt("metadata is not UTF-8".into()))?;
    Ok((meta, payload))
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let pos = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..pos], &bytes[pos + 1..]))
}

/// Reads `lens.len()` consecutive `f32` blobs; the payload must be consumed exactly.
pub(crate) fn read_blobs(payload: &[u8], lens: &[usize]) -> Result<Vec<Vec<f32>>> {
    let expected: usize = lens.iter().sum::<usize>() * 4;
    if payload.len() != expected {
        return Err(DeclipError::Corrupt(format!(
            "payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut offset = 0;
    let mut blobs = Vec::with_capacity(lens.len());
    for &len in lens {
        let blob: Vec<f32> = payload[offset..offset + len * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if blob.iter().any(|x| !x.is_finite()) {
            return Err(DeclipError::Corrupt("non-finite value in blob".into()));
        }
        offset += len * 4;
        blobs.push(blob);
    }
    Ok(blobs)
}

pub(crate) fn blob_digest(blobs: &[&[f32]]) -> String {
    let mut hasher = Sha256::new();
    for blob in blobs {
        for x in blob.iter() {
            hasher.update(x.to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

pub(crate) fn to_f32(values: &[f64]) -> Vec<f32> {
    values.iter().map(|&x| x as f32).collect()
}

pub(crate) fn to_f64(values: &[f32]) -> Vec<f64> {
    values.iter().map(|&x| f64::from(x)).collect()
}
