//! Frozen image and text encoders.
//!
//! Every backend is immutable after construction; all methods take `&self`
//! and backends are `Send + Sync`, so one instance can serve many workers.

mod remote;
mod store;
pub mod toy;

use std::path::PathBuf;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use remote::RemoteEncoder;
pub use store::EmbeddingStore;
pub use toy::ToyEncoder;

use crate::embedding::EmbeddingVector;
use crate::error::{DeclipError, Result};

/// What an image reference resolves to.
#[derive(Debug, Clone)]
pub enum ImageInput {
    /// Store key, or a path relative to the toy encoder's image root.
    Key(String),
    Pixels(RgbImage),
}

impl From<&str> for ImageInput {
    fn from(key: &str) -> Self {
        ImageInput::Key(key.to_string())
    }
}

impl From<String> for ImageInput {
    fn from(key: String) -> Self {
        ImageInput::Key(key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    PrecomputedStore,
    ToyDeterministic,
    RemoteService,
}

/// Identifies a backend well enough to rebuild or validate it later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderMetadata {
    pub kind: BackendKind,
    pub id: String,
    pub version: String,
    pub dim: usize,
    /// Seed of the toy backend's projection matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub enum EncoderBackend {
    Store(EmbeddingStore),
    Toy(ToyEncoder),
    Remote(RemoteEncoder),
}

impl EncoderBackend {
    pub fn toy(seed: u64, dim: usize) -> Self {
        EncoderBackend::Toy(ToyEncoder::new(seed, dim))
    }

    pub fn toy_with_root(seed: u64, dim: usize, root: impl Into<PathBuf>) -> Self {
        EncoderBackend::Toy(ToyEncoder::new(seed, dim).with_image_root(root))
    }

    pub fn dim(&self) -> usize {
        match self {
            EncoderBackend::Store(s) => s.dim(),
            EncoderBackend::Toy(t) => t.dim(),
            EncoderBackend::Remote(r) => r.dim(),
        }
    }

    pub fn kind(&self) -> BackendKind {
        self.metadata().kind
    }

    pub fn metadata(&self) -> EncoderMetadata {
        match self {
            EncoderBackend::Store(s) => s.metadata(),
            EncoderBackend::Toy(t) => t.metadata(),
            EncoderBackend::Remote(r) => r.metadata(),
        }
    }

    /// Image embedding, L2-normalized.
    pub fn encode_image(&self, image: &ImageInput) -> Result<EmbeddingVector> {
        let v = match self {
            EncoderBackend::Store(s) => match image {
                ImageInput::Key(key) => s.lookup(key)?,
                ImageInput::Pixels(_) => {
                    return Err(DeclipError::UnsupportedInput {
                        backend: "precomputed-store",
                        what: "pixel buffer".into(),
                    })
                }
            },
            EncoderBackend::Toy(t) => t.encode_image(image)?,
            EncoderBackend::Remote(r) => r.encode_image(image)?,
        };
        self.check_dim(v)
    }

    pub fn encode_image_key(&self, key: &str) -> Result<EmbeddingVector> {
        self.encode_image(&ImageInput::Key(key.to_string()))
    }

    /// Text embedding, L2-normalized. Rejects text that is empty after trimming.
    pub fn encode_text(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(DeclipError::EmptyText);
        }
        let v = match self {
            EncoderBackend::Store(s) => s.lookup(&EmbeddingStore::text_key(text))?,
            EncoderBackend::Toy(t) => t.encode_text(text)?,
            EncoderBackend::Remote(r) => r.encode_text(text)?,
        };
        self.check_dim(v)
    }

    /// SHA-256 over the exact output bits for a set of probe inputs. Equal
    /// fingerprints before and after some operation show that the encoder's
    /// behaviour on those inputs was not changed by it.
    pub fn fingerprint(&self, images: &[ImageInput], texts: &[&str]) -> Result<String> {
        let mut h = Sha256::new();
        for image in images {
            for x in self.encode_image(image)?.values() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        for text in texts {
            for x in self.encode_text(text)?.values() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    fn check_dim(&self, v: EmbeddingVector) -> Result<EmbeddingVector> {
        if v.dim() != self.dim() {
            return Err(DeclipError::DimensionMismatch {
                expected: self.dim(),
                actual: v.dim(),
            });
        }
        Ok(v)
    }
}
