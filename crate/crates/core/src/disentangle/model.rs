use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::loss::{contrastive_loss, contrastive_loss_symmetric};
use super::resmlp::{ResMlpGrads, ResMlpParams, ResMlpTrace};
use super::DEFAULT_TAU;
use crate::data::I2TRecord;
use crate::embedding::EmbeddingVector;
use crate::encoders::{EncoderBackend, ImageInput};
use crate::error::{DeclipError, Result};
use crate::rng::derive_seed;

/// Items per gradient chunk. Chunks are summed in a fixed order, so results
/// do not depend on the number of worker threads.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOptions {
    /// Re-normalize projector outputs to unit length.
    pub normalize_projection: bool,
    /// Average the image-anchored loss with the text-anchored one.
    pub symmetric: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            normalize_projection: true,
            symmetric: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    Perceptual,
    Semantic,
}

/// Frozen encoder plus the perceptual and semantic projectors.
#[derive(Debug, Clone)]
pub struct DeclipModel {
    encoder: Arc<EncoderBackend>,
    pub proj_p: ResMlpParams,
    pub proj_s: ResMlpParams,
    tau: f64,
    pub options: ModelOptions,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub p: ResMlpGrads,
    pub s: ResMlpGrads,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub loss_p: f64,
    pub loss_s: f64,
    pub grads: ModelGrads,
}

impl DeclipModel {
    pub fn new(encoder: Arc<EncoderBackend>, hidden: usize, seed: u64) -> Self {
        let dim = encoder.dim();
        Self {
            encoder,
            proj_p: ResMlpParams::init(dim, hidden, derive_seed(seed, 0x70)),
            proj_s: ResMlpParams::init(dim, hidden, derive_seed(seed, 0x73)),
            tau: DEFAULT_TAU,
            options: ModelOptions::default(),
            seed,
        }
    }

    pub(crate) fn from_parts(
        encoder: Arc<EncoderBackend>,
        proj_p: ResMlpParams,
        proj_s: ResMlpParams,
        tau: f64,
        options: ModelOptions,
        seed: u64,
    ) -> Self {
        Self {
            encoder,
            proj_p,
            proj_s,
            tau,
            options,
            seed,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.set_tau(tau)?;
        Ok(self)
    }

    pub fn set_tau(&mut self, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(DeclipError::InvalidConfig(format!(
                "temperature must be positive, got {tau}"
            )));
        }
        self.tau = tau;
        Ok(())
    }

    pub fn with_options(mut self, options: ModelOptions) -> Self {
        self.options = options;
        self
    }

    pub fn encoder(&self) -> &EncoderBackend {
        &self.encoder
    }

    pub fn encoder_arc(&self) -> Arc<EncoderBackend> {
        Arc::clone(&self.encoder)
    }

    pub fn dim(&self) -> usize {
        self.proj_p.dim
    }

    pub fn hidden(&self) -> usize {
        self.proj_p.hidden
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn projector(&self, which: Projection) -> &ResMlpParams {
        match which {
            Projection::Perceptual => &self.proj_p,
            Projection::Semantic => &self.proj_s,
        }
    }

    /// Applies one projector to an already-encoded image embedding.
    pub fn project_embedding(&self, which: Projection, f: &EmbeddingVector) -> Result<EmbeddingVector> {
        let normalize = self.options.normalize_projection;
        let out = self.projector(which).forward(f.values(), normalize)?;
        if normalize {
            crate::embedding::check_finite(&out, "projection")?;
            Ok(EmbeddingVector::from_trusted_unit(out))
        } else {
            EmbeddingVector::new(out)
        }
    }

    pub fn project(&self, which: Projection, image: &ImageInput) -> Result<EmbeddingVector> {
        let f = self.encoder.encode_image(image)?;
        self.project_embedding(which, &f)
    }

    pub fn project_perceptual(&self, image: &ImageInput) -> Result<EmbeddingVector> {
        self.project(Projection::Perceptual, image)
    }

    pub fn project_semantic(&self, image: &ImageInput) -> Result<EmbeddingVector> {
        self.project(Projection::Semantic, image)
    }

    /// SHA-256 over the exact bits of every projector parameter and τ.
    pub fn param_checksum(&self) -> String {
        let mut h = Sha256::new();
        for proj in [&self.proj_p, &self.proj_s] {
            for t in proj.tensors() {
                for x in t {
                    h.update(x.to_bits().to_le_bytes());
                }
            }
        }
        h.update(self.tau.to_bits().to_le_bytes());
        hex::encode(h.finalize())
    }

    /// `L = L_p + L_s` on an encoded batch, with gradients for both projectors.
    pub fn total_loss_embeddings(
        &self,
        images: &[&EmbeddingVector],
        t_p: &[&EmbeddingVector],
        t_s: &[&EmbeddingVector],
    ) -> Result<LossBreakdown> {
        let (loss_p, grads_p) = self.projector_loss(&self.proj_p, images, t_p)?;
        let (loss_s, grads_s) = self.projector_loss(&self.proj_s, images, t_s)?;
        Ok(LossBreakdown {
            total: loss_p + loss_s,
            loss_p,
            loss_s,
            grads: ModelGrads {
                p: grads_p,
                s: grads_s,
            },
        })
    }

    /// Encodes a batch of records with the frozen encoder, then evaluates the loss.
    pub fn total_loss(&self, batch: &[I2TRecord]) -> Result<LossBreakdown> {
        let enc = |r: &I2TRecord| -> Result<[EmbeddingVector; 3]> {
            Ok([
                self.encoder.encode_image_key(&r.image_ref)?,
                self.encoder.encode_text(&r.t_p)?,
                self.encoder.encode_text(&r.t_s)?,
            ])
        };
        let encoded = batch.iter().map(enc).collect::<Result<Vec<_>>>()?;
        let images: Vec<_> = encoded.iter().map(|e| &e[0]).collect();
        let t_p: Vec<_> = encoded.iter().map(|e| &e[1]).collect();
        let t_s: Vec<_> = encoded.iter().map(|e| &e[2]).collect();
        self.total_loss_embeddings(&images, &t_p, &t_s)
    }

    fn projector_loss(
        &self,
        params: &ResMlpParams,
        images: &[&EmbeddingVector],
        texts: &[&EmbeddingVector],
    ) -> Result<(f64, ResMlpGrads)> {
        if images.len() != texts.len() {
            return Err(DeclipError::LengthMismatch(images.len(), texts.len()));
        }
        if images.len() < 2 {
            return Err(DeclipError::DegenerateBatch(images.len()));
        }
        let normalize = self.options.normalize_projection;
        let traces: Vec<ResMlpTrace> = images
            .par_iter()
            .map(|f| params.forward_trace(f.values(), normalize))
            .collect::<Result<_>>()?;
        let outputs: Vec<&[f64]> = traces.iter().map(|t| t.output.as_slice()).collect();
        let text_values: Vec<&[f64]> = texts.iter().map(|t| t.values()).collect();
        let closs = if self.options.symmetric {
            contrastive_loss_symmetric(&outputs, &text_values, self.tau)?
        } else {
            contrastive_loss(&outputs, &text_values, self.tau)?
        };
        let (dim, hidden) = (params.dim, params.hidden);
        let partials: Vec<ResMlpGrads> = traces
            .par_chunks(GRAD_CHUNK)
            .zip(closs.grad_img.par_chunks(GRAD_CHUNK))
            .map(|(tr, gi)| {
                let mut acc = ResMlpGrads::zeros(dim, hidden);
                for (t, g) in tr.iter().zip(gi) {
                    params.backward(t, g, &mut acc);
                }
                acc
            })
            .collect();
        let mut grads = ResMlpGrads::zeros(dim, hidden);
        for p in &partials {
            grads.add_assign(p);
        }
        Ok((closs.loss, grads))
    }
}
