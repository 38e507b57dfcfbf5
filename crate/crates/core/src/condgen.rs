//! Decoupled condition bundles for an external generator: a projected image
//! embedding paired with the complementary raw text embedding.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::disentangle::{DeclipModel, Projection};
use crate::embedding::EmbeddingVector;
use crate::encoders::ImageInput;
use crate::error::{DeclipError, Result};
use crate::wire;

const MAGIC: &str = "DECLIP-COND";
const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionMode {
    PerceptualImageSemanticText,
    SemanticImagePerceptualText,
}

impl ConditionMode {
    pub const ALL: [ConditionMode; 2] = [
        ConditionMode::PerceptualImageSemanticText,
        ConditionMode::SemanticImagePerceptualText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionMode::PerceptualImageSemanticText => "perceptual_image_semantic_text",
            ConditionMode::SemanticImagePerceptualText => "semantic_image_perceptual_text",
        }
    }

    /// Projector applied to the image side.
    pub fn image_projection(self) -> Projection {
        match self {
            ConditionMode::PerceptualImageSemanticText => Projection::Perceptual,
            ConditionMode::SemanticImagePerceptualText => Projection::Semantic,
        }
    }

    /// Role the text side plays; always the complement of the image side.
    pub fn text_role(self) -> Projection {
        match self.image_projection() {
            Projection::Perceptual => Projection::Semantic,
            Projection::Semantic => Projection::Perceptual,
        }
    }
}

impl std::str::FromStr for ConditionMode {
    type Err = DeclipError;

    fn from_str(s: &str) -> Result<Self> {
        ConditionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| DeclipError::InvalidCondition(format!("unknown mode `{s}`")))
    }
}

impl std::fmt::Display for ConditionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub image_ref: String,
    pub text: String,
    pub checkpoint_id: String,
    pub image_projection: Projection,
    pub text_role: Projection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBundle {
    pub mode: ConditionMode,
    pub image_embedding: EmbeddingVector,
    pub text_embedding: EmbeddingVector,
    pub provenance: Provenance,
}

impl ConditionBundle {
    pub fn dim(&self) -> usize {
        self.image_embedding.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DeclipError::InvalidCondition(m));
        if self.provenance.image_projection != self.mode.image_projection()
            || self.provenance.text_role != self.mode.text_role()
        {
            return bad(format!(
                "mode {} does not match provenance roles ({:?} image, {:?} text)",
                self.mode, self.provenance.image_projection, self.provenance.text_role
            ));
        }
        if self.image_embedding.dim() != self.text_embedding.dim() {
            return bad(format!(
                "image dim {} differs from text dim {}",
                self.image_embedding.dim(),
                self.text_embedding.dim()
            ));
        }
        if self.image_embedding.dim() == 0 {
            return bad("empty embeddings".into());
        }
        if self.provenance.text.trim().is_empty() {
            return bad("empty text".into());
        }
        Ok(())
    }
}

/// Builds the bundle for `mode`: image through the matching projector, text
/// through the frozen encoder. Both sides are stored at `f32` precision.
pub fn assemble_condition(
    model: &DeclipModel,
    mode: ConditionMode,
    image: &ImageInput,
    text: &str,
) -> Result<ConditionBundle> {
    if text.trim().is_empty() {
        return Err(DeclipError::EmptyText);
    }
    let image_embedding = model.project(mode.image_projection(), image)?.to_f32_precision();
    let text_embedding = model.encoder().encode_text(text)?.to_f32_precision();
    let image_ref = match image {
        ImageInput::Key(k) => k.clone(),
        ImageInput::Pixels(_) => "<pixels>".to_string(),
    };
    let bundle = ConditionBundle {
        mode,
        image_embedding,
        text_embedding,
        provenance: Provenance {
            image_ref,
            text: text.to_string(),
            checkpoint_id: model.param_checksum(),
            image_projection: mode.image_projection(),
            text_role: mode.text_role(),
        },
    };
    bundle.validate()?;
    Ok(bundle)
}

#[derive(Debug, Serialize, Deserialize)]
struct CondMetadata {
    format_version: u32,
    mode: ConditionMode,
    dim: usize,
    /// Normalized flags of the image and text embeddings.
    normalized: [bool; 2],
    provenance: Provenance,
    sha256: String,
}

pub fn condition_bytes(bundle: &ConditionBundle) -> Result<Vec<u8>> {
    bundle.validate()?;
    let image = bundle.image_embedding.to_f32_vec();
    let text = bundle.text_embedding.to_f32_vec();
    let blobs: [&[f32]; 2] = [&image, &text];
    let meta = CondMetadata {
        format_version: 1,
        mode: bundle.mode,
        dim: bundle.dim(),
        normalized: [bundle.image_embedding.is_normalized(), bundle.text_embedding.is_normalized()],
        provenance: bundle.provenance.clone(),
        sha256: wire::blob_digest(&blobs),
    };
    let json = serde_json::to_string(&meta).expect("metadata serializes");
    Ok(wire::encode(&format!("{MAGIC} {VERSION}"), &json, &blobs))
}

pub fn condition_from_bytes(bytes: &[u8]) -> Result<ConditionBundle> {
    let (json, payload) = wire::decode(bytes, MAGIC, VERSION)?;
    let meta: CondMetadata =
        serde_json::from_str(json).map_err(|e| DeclipError::Corrupt(format!("condition metadata: {e}")))?;
    if meta.format_version != 1 {
        return Err(DeclipError::VersionMismatch {
            expected: "1".into(),
            found: meta.format_version.to_string(),
        });
    }
    let blobs = wire::read_blobs(payload, &[meta.dim, meta.dim])?;
    let refs: Vec<&[f32]> = blobs.iter().map(Vec::as_slice).collect();
    if wire::blob_digest(&refs) != meta.sha256 {
        return Err(DeclipError::Corrupt("condition payload digest mismatch".into()));
    }
    let bundle = ConditionBundle {
        mode: meta.mode,
        image_embedding: EmbeddingVector::from_stored(wire::to_f64(&blobs[0]), meta.normalized[0])?,
        text_embedding: EmbeddingVector::from_stored(wire::to_f64(&blobs[1]), meta.normalized[1])?,
        provenance: meta.provenance,
    };
    bundle.validate()?;
    Ok(bundle)
}

pub fn export_condition(bundle: &ConditionBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, condition_bytes(bundle)?).map_err(|e| DeclipError::io(path, e))
}

pub fn import_condition(path: impl AsRef<Path>) -> Result<ConditionBundle> {
    let path = path.as_ref();
    condition_from_bytes(&std::fs::read(path).map_err(|e| DeclipError::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::encoders::EncoderBackend;
    use crate::rng::SplitMix64;

    fn random_bundle(rng: &mut SplitMix64) -> ConditionBundle {
        let dim = 1 + rng.below(40) as usize;
        let mut raw = || (0..dim).map(|_| rng.next_gaussian() * 3.0).collect::<Vec<f64>>();
        let image_embedding = EmbeddingVector::normalized(raw()).unwrap().to_f32_precision();
        let text_embedding = EmbeddingVector::new(raw()).unwrap().to_f32_precision();
        let mode = ConditionMode::ALL[rng.below(2) as usize];
        ConditionBundle {
            mode,
            image_embedding,
            text_embedding,
            provenance: Provenance {
                image_ref: format!("img_{}.png", rng.next_u64()),
                text: "soft warm light, ünïcode ✓".into(),
                checkpoint_id: format!("{:016x}", rng.next_u64()),
                image_projection: mode.image_projection(),
                text_role: mode.text_role(),
            },
        }
    }

    #[test]
    fn random_bundles_round_trip_bitwise() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..100 {
            let b = random_bundle(&mut rng);
            let back = condition_from_bytes(&condition_bytes(&b).unwrap()).unwrap();
            assert_eq!(back, b);
            let bits = |e: &EmbeddingVector| e.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&back.image_embedding), bits(&b.image_embedding));
            assert_eq!(bits(&back.text_embedding), bits(&b.text_embedding));
        }
    }

    #[test]
    fn flipped_mode_is_rejected() {
        let mut rng = SplitMix64::new(5);
        let mut b = random_bundle(&mut rng);
        b.mode = ConditionMode::PerceptualImageSemanticText;
        b.provenance.image_projection = Projection::Perceptual;
        b.provenance.text_role = Projection::Semantic;
        let mut bytes = condition_bytes(&b).unwrap();
        let from = b"perceptual_image_semantic_text";
        let at = bytes.windows(from.len()).position(|w| w == from).unwrap();
        bytes[at..at + from.len()].copy_from_slice(b"semantic_image_perceptual_text");
        assert!(matches!(
            condition_from_bytes(&bytes),
            Err(DeclipError::InvalidCondition(_))
        ));
    }

    #[test]
    fn truncated_or_foreign_files_are_rejected() {
        let mut rng = SplitMix64::new(6);
        let bytes = condition_bytes(&random_bundle(&mut rng)).unwrap();
        for cut in [0, 5, 20, bytes.len() - 1] {
            assert!(condition_from_bytes(&bytes[..cut]).is_err());
        }
        let mut v2 = bytes.clone();
        v2[13] = b'2';
        assert!(matches!(condition_from_bytes(&v2), Err(DeclipError::VersionMismatch { .. })));
    }

    #[test]
    fn modes_agree_at_init_and_select_projectors() {
        let model = DeclipModel::new(Arc::new(EncoderBackend::toy(1, 16)), 8, 2);
        let img = ImageInput::Pixels(image::RgbImage::from_pixel(8, 8, image::Rgb([90, 40, 200])));
        let a = assemble_condition(&model, ConditionMode::PerceptualImageSemanticText, &img, "a cat").unwrap();
        let b = assemble_condition(&model, ConditionMode::SemanticImagePerceptualText, &img, "a cat").unwrap();
        assert_eq!(a.image_embedding, b.image_embedding);
        assert_eq!(a.provenance.image_projection, Projection::Perceptual);
        assert_eq!(b.provenance.text_role, Projection::Perceptual);
        assert!(matches!(
            assemble_condition(&model, ConditionMode::PerceptualImageSemanticText, &img, "  "),
            Err(DeclipError::EmptyText)
        ));
        assert_eq!("semantic_image_perceptual_text".parse::<ConditionMode>().unwrap(), b.mode);
        assert!("mixed".parse::<ConditionMode>().is_err());
    }
}
