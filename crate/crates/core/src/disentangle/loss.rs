//! Image-anchored InfoNCE:
//! `L = -(1/B) Σ_i log softmax_j(f_i · g_j / τ)[i]`, image rows as anchors,
//! softmax over the text columns of the batch.

use crate::embedding::dot;
use crate::error::{DeclipError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveOutput {
    pub loss: f64,
    /// `∂L/∂f_i` for each image embedding.
    pub grad_img: Vec<Vec<f64>>,
    /// `∂L/∂g_j` for each text embedding.
    pub grad_txt: Vec<Vec<f64>>,
}

fn check_batch<T: AsRef<[f64]>>(img: &[T], txt: &[T], tau: f64) -> Result<()> {
    if img.len() != txt.len() {
        return Err(DeclipError::LengthMismatch(img.len(), txt.len()));
    }
    if img.len() < 2 {
        return Err(DeclipError::DegenerateBatch(img.len()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(DeclipError::InvalidConfig(format!("temperature must be positive, got {tau}")));
    }
    let dim = img[0].as_ref().len();
    for v in img.iter().chain(txt) {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(DeclipError::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(DeclipError::NonFinite("contrastive loss input".into()));
        }
    }
    Ok(())
}

/// Loss and gradients with images as anchors.
pub fn contrastive_loss<T: AsRef<[f64]>>(img: &[T], txt: &[T], tau: f64) -> Result<ContrastiveOutput> {
    check_batch(img, txt, tau)?;
    let b = img.len();
    let dim = img[0].as_ref().len();
    let mut loss = 0.0;
    let mut grad_img = vec![vec![0.0; dim]; b];
    let mut grad_txt = vec![vec![0.0; dim]; b];
    for i in 0..b {
        let fi = img[i].as_ref();
        let logits: Vec<f64> = txt.iter().map(|g| dot(fi, g.as_ref()) / tau).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += max + z.ln() - logits[i];
        for j in 0..b {
            // ∂L/∂logit_ij = (p_ij - δ_ij) / B, and ∂logit_ij = (f_i · g_j) / τ.
            let coef = (exps[j] / z - if i == j { 1.0 } else { 0.0 }) / (b as f64 * tau);
            let gj = txt[j].as_ref();
            for k in 0..dim {
                grad_img[i][k] += coef * gj[k];
                grad_txt[j][k] += coef * fi[k];
            }
        }
    }
    let loss = loss / b as f64;
    if !loss.is_finite() {
        return Err(DeclipError::NonFinite("contrastive loss".into()));
    }
    Ok(ContrastiveOutput {
        loss,
        grad_img,
        grad_txt,
    })
}

/// Mean of the image-anchored and text-anchored losses.
pub fn contrastive_loss_symmetric<T: AsRef<[f64]>>(
    img: &[T],
    txt: &[T],
    tau: f64,
) -> Result<ContrastiveOutput> {
    let fwd = contrastive_loss(img, txt, tau)?;
    let rev = contrastive_loss(txt, img, tau)?;
    let avg = |a: Vec<Vec<f64>>, b: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        a.into_iter()
            .zip(b)
            .map(|(x, y)| x.iter().zip(&y).map(|(p, q)| 0.5 * (p + q)).collect())
            .collect()
    };
    Ok(ContrastiveOutput {
        loss: 0.5 * (fwd.loss + rev.loss),
        grad_img: avg(fwd.grad_img, rev.grad_txt),
        grad_txt: avg(fwd.grad_txt, rev.grad_img),
    })
}
