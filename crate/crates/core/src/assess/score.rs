//! Two-way softmax over cosine similarities to a positive and a negative
//! prompt: `s = e^{c+} / (e^{c+} + e^{c-})`, with no temperature.

use super::prompts::{AntonymPromptPair, AttributeTable};
use crate::disentangle::DeclipModel;
use crate::embedding::cosine;
use crate::encoders::ImageInput;
use crate::error::Result;

/// `σ(cos_pos − cos_neg)`, strictly inside `(0, 1)` for cosines in `[−1, 1]`.
pub fn score_from_cosines(cos_pos: f64, cos_neg: f64) -> f64 {
    1.0 / (1.0 + (cos_neg - cos_pos).exp())
}

/// Score of an image embedding against two prompt embeddings.
pub fn score_embedding(image: &[f64], positive: &[f64], negative: &[f64]) -> f64 {
    score_from_cosines(cosine(image, positive), cosine(image, negative))
}

/// Zero-shot score from the perceptual projection of `image`.
pub fn zero_shot_score(model: &DeclipModel, image: &ImageInput, prompts: &AntonymPromptPair) -> Result<f64> {
    prompts.check_non_empty()?;
    let f = model.project_perceptual(image)?;
    let pos = model.encoder().encode_text(&prompts.positive)?;
    let neg = model.encoder().encode_text(&prompts.negative)?;
    Ok(score_embedding(f.values(), pos.values(), neg.values()))
}

/// Same mechanics as [`zero_shot_score`] with a named attribute's prompts.
pub fn attribute_score(
    model: &DeclipModel,
    image: &ImageInput,
    table: &AttributeTable,
    attribute: &str,
) -> Result<f64> {
    zero_shot_score(model, image, table.get(attribute)?)
}
