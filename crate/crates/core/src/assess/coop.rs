//! Prompt-context tuning for a frozen model.
//!
//! Each class text feature is `normalize(anchor + Σ context rows)`, where the
//! anchor is the frozen encoding of the hand-written prompt. Context rows
//! start at zero, so an untrained prompt vector scores exactly like the hand
//! prompts. Rows are fit so the two-way score regresses min-max normalized
//! MOS under squared error.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::eval::MosItem;
use super::prompts::AntonymPromptPair;
use super::score::score_from_cosines;
use crate::disentangle::{AdamW, DeclipModel};
use crate::embedding::{dot, l2_norm, EmbeddingVector};
use crate::encoders::ImageInput;
use crate::error::{DeclipError, Result};
use crate::rng::{derive_seed, SplitMix64};

pub const DEFAULT_CONTEXT_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoopConfig {
    pub context_len: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// One context shared by both classes, or one per class.
    pub shared_context: bool,
}

impl Default for CoopConfig {
    fn default() -> Self {
        Self {
            context_len: DEFAULT_CONTEXT_LEN,
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 5e-2,
            seed: 0,
            shared_context: true,
        }
    }
}

impl CoopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DeclipError::InvalidConfig(m.to_string()));
        if self.context_len == 0 {
            return bad("context_len must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be finite and non-negative");
        }
        Ok(())
    }
}

/// Learned prompt context plus the frozen anchors it is added to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptVector {
    pub prompts: AntonymPromptPair,
    pub positive_anchor: Vec<f64>,
    pub negative_anchor: Vec<f64>,
    /// Shared context, or the positive class's when `negative_context` is set.
    pub context: Vec<Vec<f64>>,
    pub negative_context: Option<Vec<Vec<f64>>>,
}

impl PromptVector {
    /// Zero context on top of the encoded hand prompts.
    pub fn warm_start(model: &DeclipModel, prompts: &AntonymPromptPair, context_len: usize, shared: bool) -> Result<Self> {
        prompts.check_non_empty()?;
        if context_len == 0 {
            return Err(DeclipError::InvalidConfig("context_len must be at least 1".into()));
        }
        let dim = model.dim();
        let zeros = vec![vec![0.0; dim]; context_len];
        Ok(Self {
            prompts: prompts.clone(),
            positive_anchor: model.encoder().encode_text(&prompts.positive)?.into_values(),
            negative_anchor: model.encoder().encode_text(&prompts.negative)?.into_values(),
            negative_context: (!shared).then(|| zeros.clone()),
            context: zeros,
        })
    }

    pub fn m(&self) -> usize {
        self.context.len()
    }

    pub fn dim(&self) -> usize {
        self.positive_anchor.len()
    }

    pub fn is_shared(&self) -> bool {
        self.negative_context.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if self.m() == 0 {
            return Err(DeclipError::InvalidConfig("prompt vector has no context rows".into()));
        }
        let rows = self.context.iter().chain(self.negative_context.iter().flatten());
        for v in rows.chain([&self.positive_anchor, &self.negative_anchor]) {
            if v.len() != dim {
                return Err(DeclipError::DimensionMismatch { expected: dim, actual: v.len() });
            }
            crate::embedding::check_finite(v, "prompt vector")?;
        }
        if let Some(neg) = &self.negative_context {
            if neg.len() != self.m() {
                return Err(DeclipError::LengthMismatch(self.m(), neg.len()));
            }
        }
        Ok(())
    }

    fn raw(&self, anchor: &[f64], context: &[Vec<f64>]) -> Vec<f64> {
        let mut u = anchor.to_vec();
        for row in context {
            for (a, b) in u.iter_mut().zip(row) {
                *a += b;
            }
        }
        u
    }

    fn raw_features(&self) -> (Vec<f64>, Vec<f64>) {
        let neg_ctx = self.negative_context.as_ref().unwrap_or(&self.context);
        (self.raw(&self.positive_anchor, &self.context), self.raw(&self.negative_anchor, neg_ctx))
    }

    /// Unit positive and negative text features.
    pub fn text_features(&self) -> Result<(EmbeddingVector, EmbeddingVector)> {
        let (u_pos, u_neg) = self.raw_features();
        Ok((EmbeddingVector::normalized(u_pos)?, EmbeddingVector::normalized(u_neg)?))
    }

    pub fn score_feature(&self, image_feature: &EmbeddingVector) -> Result<f64> {
        let (pos, neg) = self.text_features()?;
        Ok(score_from_cosines(image_feature.cosine(&pos), image_feature.cosine(&neg)))
    }

    /// Score of an image through the model's perceptual projection.
    pub fn score(&self, model: &DeclipModel, image: &ImageInput) -> Result<f64> {
        self.score_feature(&model.project_perceptual(image)?)
    }

    /// SHA-256 over the exact bits of every stored float.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let rows = self.context.iter().chain(self.negative_context.iter().flatten());
        for v in rows.chain([&self.positive_anchor, &self.negative_anchor]) {
            for x in v {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("prompt vector serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let pv: Self = serde_json::from_str(text).map_err(|e| DeclipError::Corrupt(format!("prompt vector: {e}")))?;
        pv.validate()?;
        Ok(pv)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| DeclipError::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| DeclipError::io(path, e))?)
    }
}

#[derive(Debug, Clone)]
pub struct CoopOutcome {
    pub prompt: PromptVector,
    pub epoch_losses: Vec<f64>,
}

/// Squared-error loss of one batch and its gradients with respect to the
/// unnormalized positive and negative text features.
fn batch_loss(
    features: &[&EmbeddingVector],
    targets: &[f64],
    u_pos: &[f64],
    u_neg: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n_pos = l2_norm(u_pos);
    let n_neg = l2_norm(u_neg);
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(DeclipError::ZeroNorm);
    }
    let t_pos: Vec<f64> = u_pos.iter().map(|x| x / n_pos).collect();
    let t_neg: Vec<f64> = u_neg.iter().map(|x| x / n_neg).collect();
    let n = features.len() as f64;
    let mut loss = 0.0;
    let mut g_pos = vec![0.0; u_pos.len()];
    let mut g_neg = vec![0.0; u_neg.len()];
    for (f, &y) in features.iter().zip(targets) {
        let f = f.values();
        let c_pos = dot(f, &t_pos);
        let c_neg = dot(f, &t_neg);
        let s = score_from_cosines(c_pos, c_neg);
        loss += (s - y).powi(2) / n;
        // dL/dc+ = r, dL/dc- = -r, and dc/du = (f - c t)/|u|.
        let r = 2.0 * (s - y) / n * s * (1.0 - s);
        for i in 0..f.len() {
            g_pos[i] += r * (f[i] - c_pos * t_pos[i]) / n_pos;
            g_neg[i] -= r * (f[i] - c_neg * t_neg[i]) / n_neg;
        }
    }
    Ok((loss, g_pos, g_neg))
}

/// Fits prompt context rows to MOS on `items`; `model` is only read.
pub fn coop_tune(
    model: &DeclipModel,
    items: &[MosItem],
    prompts: &AntonymPromptPair,
    config: &CoopConfig,
) -> Result<CoopOutcome> {
    config.validate()?;
    if items.len() < config.batch_size.max(2) {
        return Err(DeclipError::InsufficientData(format!(
            "{} training items for batch size {}",
            items.len(),
            config.batch_size
        )));
    }
    let lo = items.iter().map(|i| i.mos).fold(f64::INFINITY, f64::min);
    let hi = items.iter().map(|i| i.mos).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(DeclipError::InsufficientData("MOS is constant across training items".into()));
    }
    let targets: Vec<f64> = items.iter().map(|i| (i.mos - lo) / (hi - lo)).collect();
    let features = items
        .iter()
        .map(|i| model.project_perceptual(&ImageInput::Key(i.image_ref.clone())))
        .collect::<Result<Vec<_>>>()?;

    let mut pv = PromptVector::warm_start(model, prompts, config.context_len, config.shared_context)?;
    let mut opt = AdamW::new(config.learning_rate, config.weight_decay);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        SplitMix64::new(derive_seed(config.seed, epoch as u64)).shuffle(&mut order);
        let mut total = 0.0;
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let fs: Vec<&EmbeddingVector> = chunk.iter().map(|&i| &features[i]).collect();
            let ys: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let (u_pos, u_neg) = pv.raw_features();
            let (loss, g_pos, g_neg) = batch_loss(&fs, &ys, &u_pos, &u_neg)?;
            if !loss.is_finite() {
                return Err(DeclipError::NonFiniteLoss { epoch, step, detail: format!("coop loss {loss}") });
            }
            total += loss;
            steps += 1;
            // Every row of a context receives the gradient of the sum it feeds.
            match &mut pv.negative_context {
                None => {
                    let g: Vec<f64> = g_pos.iter().zip(&g_neg).map(|(a, b)| a + b).collect();
                    let grads: Vec<&[f64]> = vec![g.as_slice(); pv.context.len()];
                    let mut params: Vec<&mut Vec<f64>> = pv.context.iter_mut().collect();
                    opt.step(&mut params, &grads);
                }
                Some(neg) => {
                    let m = pv.context.len();
                    let grads: Vec<&[f64]> =
                        std::iter::repeat_n(g_pos.as_slice(), m).chain(std::iter::repeat_n(g_neg.as_slice(), m)).collect();
                    let mut params: Vec<&mut Vec<f64>> = pv.context.iter_mut().chain(neg.iter_mut()).collect();
                    opt.step(&mut params, &grads);
                }
            }
        }
        epoch_losses.push(total / steps as f64);
    }
    pv.validate()?;
    Ok(CoopOutcome { prompt: pv, epoch_losses })
}
