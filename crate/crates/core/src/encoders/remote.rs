//! HTTP encoder backend.
//!
//! `POST {base_url}/encode` with `{"modality": "image" | "text", "payload": ...}`
//! and expects `{"dim": D, "values": [...]}`. Image keys are sent as strings;
//! pixel buffers as `{"png_base64": "..."}`. One attempt per call, 10 s timeout.

use std::io::Cursor;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendKind, EncoderMetadata, ImageInput};
use crate::embedding::EmbeddingVector;
use crate::error::{DeclipError, Result};

pub const TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Serialize)]
struct EncodeRequest<'a> {
    modality: &'a str,
    payload: Value,
}

#[derive(Debug, Deserialize)]
struct EncodeResponse {
    dim: usize,
    values: Vec<f64>,
}

pub struct RemoteEncoder {
    base_url: String,
    dim: usize,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEncoder")
            .field("base_url", &self.base_url)
            .field("dim", &self.dim)
            .finish()
    }
}

impl RemoteEncoder {
    pub fn new(base_url: impl Into<String>, dim: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(TIMEOUT))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            dim,
            agent,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metadata(&self) -> EncoderMetadata {
        EncoderMetadata {
            kind: BackendKind::RemoteService,
            id: self.base_url.clone(),
            version: "remote-v1".into(),
            dim: self.dim,
            seed: None,
        }
    }

    pub fn encode_text(&self, text: &str) -> Result<EmbeddingVector> {
        self.request("text", Value::String(text.to_string()))
    }

    pub fn encode_image(&self, image: &ImageInput) -> Result<EmbeddingVector> {
        let payload = match image {
            ImageInput::Key(key) => Value::String(key.clone()),
            ImageInput::Pixels(img) => {
                let mut buf = Cursor::new(Vec::new());
                img.write_to(&mut buf, image::ImageFormat::Png)
                    .map_err(|e| DeclipError::RemoteUnavailable(format!("png encoding: {e}")))?;
                json!({ "png_base64": STANDARD.encode(buf.into_inner()) })
            }
        };
        self.request("image", payload)
    }

    fn request(&self, modality: &str, payload: Value) -> Result<EmbeddingVector> {
        let url = format!("{}/encode", self.base_url);
        let unavailable = |e: ureq::Error| DeclipError::RemoteUnavailable(format!("{url}: {e}"));
        let mut response = self
            .agent
            .post(&url)
            .send_json(EncodeRequest { modality, payload })
            .map_err(unavailable)?;
        let body: EncodeResponse = response.body_mut().read_json().map_err(unavailable)?;
        if body.dim != self.dim || body.values.len() != self.dim {
            return Err(DeclipError::DimensionMismatch {
                expected: self.dim,
                actual: if body.dim != self.dim { body.dim } else { body.values.len() },
            });
        }
        EmbeddingVector::normalized(body.values)
    }
}
