use serde::{Deserialize, Serialize};

use crate::error::{DeclipError, Result};

/// Unit-norm tolerance used by [`EmbeddingVector::is_unit`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// A finite real vector produced by an encoder or projector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    normalized: bool,
}

impl EmbeddingVector {
    /// Wraps raw values without normalizing them.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "embedding")?;
        if values.is_empty() {
            return Err(DeclipError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// Scales `values` to unit L2 norm.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let mut v = Self::new(values)?;
        let norm = l2_norm(&v.values);
        if norm == 0.0 {
            return Err(DeclipError::ZeroNorm);
        }
        v.values.iter_mut().for_each(|x| *x /= norm);
        v.normalized = true;
        Ok(v)
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::normalized(values.iter().map(|&x| f64::from(x)).collect())
    }

    /// Rebuilds a vector from stored values without renormalizing.
    pub(crate) fn from_stored(values: Vec<f64>, normalized: bool) -> Result<Self> {
        let mut v = Self::new(values)?;
        v.normalized = normalized;
        Ok(v)
    }

    pub(crate) fn from_trusted_unit(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: true,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        cosine(&self.values, &other.values)
    }

    /// Rounds every entry to the nearest `f32`, keeping the normalized flag.
    pub fn to_f32_precision(&self) -> Self {
        Self {
            values: self.values.iter().map(|&x| f64::from(x as f32)).collect(),
            normalized: self.normalized,
        }
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.values.iter().map(|&x| x as f32).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (l2_norm(a) * l2_norm(b))
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(DeclipError::NonFinite(what.to_string()))
    }
}
