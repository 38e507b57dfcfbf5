//! Disentangles a frozen joint image-text embedding space into a perceptual
//! and a semantic alignment subspace.
//!
//! Two residual projectors sit on top of a frozen image encoder. Each is
//! trained with an image-anchored contrastive loss against its own text
//! description (perceptual or semantic), so that the perceptual projection
//! can drive zero-shot quality scoring and the two projections can be mixed
//! with complementary text as generator conditions.
//!
//! Module map:
//! - [`encoders`]: frozen image/text embedding backends.
//! - [`data`]: I&2T records, vocabulary filtering, relabeling, synthetic benchmark.
//! - [`disentangle`]: projectors, contrastive losses, AdamW training, checkpoints.
//! - [`assess`]: antonym-prompt scoring, correlations, evaluation, prompt tuning.
//! - [`condgen`]: decoupled condition bundles for external generators.

pub mod assess;
pub mod condgen;
pub mod data;
pub mod disentangle;
pub mod embedding;
pub mod encoders;
pub mod error;
pub mod rng;
pub(crate) mod wire;

pub use embedding::EmbeddingVector;
pub use error::{DeclipError, Result};
