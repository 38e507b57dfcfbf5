//! Checkpoint files: `DECLIP-CKPT v1`, one line of JSON metadata, then the
//! little-endian `f32` blobs `W1_p, b1_p, W2_p, W1_s, b1_s, W2_s`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::model::{DeclipModel, ModelOptions};
use super::resmlp::ResMlpParams;
use crate::encoders::{EncoderBackend, EncoderMetadata};
use crate::error::{DeclipError, Result};
use crate::wire;

const MAGIC: &str = "DECLIP-CKPT";
const VERSION: &str = "v1";
pub const BLOB_ORDER: [&str; 6] = ["W1_p", "b1_p", "W2_p", "W1_s", "b1_s", "W2_s"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub format_version: u32,
    pub dim: usize,
    pub hidden: usize,
    pub tau: f64,
    pub seed: u64,
    pub options: ModelOptions,
    pub encoder: EncoderMetadata,
    /// `(name, element count)` for each blob, in file order.
    pub blobs: Vec<(String, usize)>,
    /// SHA-256 of the blob payload.
    pub sha256: String,
}

fn blob_lens(dim: usize, hidden: usize) -> [usize; 6] {
    let (w, b) = (dim * hidden, hidden);
    [w, b, w, w, b, w]
}

pub fn checkpoint_bytes(model: &DeclipModel) -> Vec<u8> {
    let tensors: Vec<Vec<f32>> = [&model.proj_p, &model.proj_s]
        .iter()
        .flat_map(|p| p.tensors().map(wire::to_f32))
        .collect();
    let blobs: Vec<&[f32]> = tensors.iter().map(Vec::as_slice).collect();
    let meta = CheckpointMetadata {
        format_version: 1,
        dim: model.dim(),
        hidden: model.hidden(),
        tau: model.tau(),
        seed: model.seed(),
        options: model.options,
        encoder: model.encoder().metadata(),
        blobs: BLOB_ORDER
            .iter()
            .zip(blob_lens(model.dim(), model.hidden()))
            .map(|(n, l)| (n.to_string(), l))
            .collect(),
        sha256: wire::blob_digest(&blobs),
    };
    let json = serde_json::to_string(&meta).expect("metadata serializes");
    wire::encode(&format!("{MAGIC} {VERSION}"), &json, &blobs)
}

pub fn save_checkpoint(model: &DeclipModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    // Write then rename, so an interrupted save never clobbers a good file.
    let tmp = path.with_extension("ckpt.partial");
    std::fs::write(&tmp, checkpoint_bytes(model)).map_err(|e| DeclipError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| DeclipError::io(path, e))
}

fn parse_metadata(bytes: &[u8]) -> Result<(CheckpointMetadata, &[u8])> {
    let (json, payload) = wire::decode(bytes, MAGIC, VERSION)?;
    let meta: CheckpointMetadata = serde_json::from_str(json)
        .map_err(|e| DeclipError::Corrupt(format!("checkpoint metadata: {e}")))?;
    if meta.format_version != 1 {
        return Err(DeclipError::VersionMismatch {
            expected: "1".into(),
            found: meta.format_version.to_string(),
        });
    }
    Ok((meta, payload))
}

pub fn read_checkpoint_metadata(path: impl AsRef<Path>) -> Result<CheckpointMetadata> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| DeclipError::io(path, e))?;
    Ok(parse_metadata(&bytes)?.0)
}

pub fn checkpoint_from_bytes(bytes: &[u8], encoder: Arc<EncoderBackend>) -> Result<DeclipModel> {
    let (meta, payload) = parse_metadata(bytes)?;
    if meta.dim != encoder.dim() {
        return Err(DeclipError::DimensionMismatch {
            expected: meta.dim,
            actual: encoder.dim(),
        });
    }
    let lens = blob_lens(meta.dim, meta.hidden);
    let declared: Vec<(String, usize)> = BLOB_ORDER
        .iter()
        .zip(lens)
        .map(|(n, l)| (n.to_string(), l))
        .collect();
    if meta.blobs != declared {
        return Err(DeclipError::Corrupt(format!(
            "blob table {:?} does not match dims ({}, {})",
            meta.blobs, meta.dim, meta.hidden
        )));
    }
    let blobs = wire::read_blobs(payload, &lens)?;
    let refs: Vec<&[f32]> = blobs.iter().map(Vec::as_slice).collect();
    if wire::blob_digest(&refs) != meta.sha256 {
        return Err(DeclipError::Corrupt("parameter checksum mismatch".into()));
    }
    if !(meta.tau > 0.0 && meta.tau.is_finite()) {
        return Err(DeclipError::Corrupt(format!("invalid temperature {}", meta.tau)));
    }
    let mut it = blobs.iter().map(|b| wire::to_f64(b));
    let mut take = || ResMlpParams {
        dim: meta.dim,
        hidden: meta.hidden,
        w1: it.next().unwrap(),
        b1: it.next().unwrap(),
        w2: it.next().unwrap(),
    };
    let proj_p = take();
    let proj_s = take();
    Ok(DeclipModel::from_parts(
        encoder,
        proj_p,
        proj_s,
        meta.tau,
        meta.options,
        meta.seed,
    ))
}

/// Loads a checkpoint against `encoder`, whose dimension must match.
pub fn load_checkpoint(path: impl AsRef<Path>, encoder: Arc<EncoderBackend>) -> Result<DeclipModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| DeclipError::io(path, e))?;
    checkpoint_from_bytes(&bytes, encoder)
}
