//! `out = normalize(x + W2 · silu(W1 · x + b1))`, with `W2` zero-initialized
//! and bias-free so the block starts as the identity.
//!
//! Layout: `w1` holds `hidden` rows of length `dim`; `w2` holds `dim` rows
//! of length `hidden`. Stored values are always representable as `f32`.

use crate::embedding::l2_norm;
use crate::error::{DeclipError, Result};
use crate::rng::SplitMix64;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResMlpParams {
    pub dim: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ResMlpTrace {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
    pub sum: Vec<f64>,
    pub output: Vec<f64>,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResMlpGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl ResMlpGrads {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            w1: vec![0.0; dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; dim * hidden],
        }
    }

    pub fn add_assign(&mut self, other: &ResMlpGrads) {
        for (a, b) in [
            (&mut self.w1, &other.w1),
            (&mut self.b1, &other.b1),
            (&mut self.w2, &other.w2),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn tensors(&self) -> [&[f64]; 3] {
        [&self.w1, &self.b1, &self.w2]
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

impl ResMlpParams {
    /// Seeded init: `W1` and `b1` uniform in `±1/sqrt(dim)`, `W2 = 0`.
    pub fn init(dim: usize, hidden: usize, seed: u64) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let mut rng = SplitMix64::new(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| f64::from(rng.uniform(-bound, bound) as f32))
                .collect()
        };
        let w1 = draw(hidden * dim);
        let b1 = draw(hidden);
        Self {
            dim,
            hidden,
            w1,
            b1,
            w2: vec![0.0; dim * hidden],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 3] {
        [&self.w1, &self.b1, &self.w2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.w1, &mut self.b1, &mut self.w2]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn forward(&self, input: &[f64], normalize: bool) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input, normalize)?.output)
    }

    pub fn forward_trace(&self, input: &[f64], normalize: bool) -> Result<ResMlpTrace> {
        if input.len() != self.dim {
            return Err(DeclipError::DimensionMismatch {
                expected: self.dim,
                actual: input.len(),
            });
        }
        let (d, h) = (self.dim, self.hidden);
        let pre: Vec<f64> = (0..h)
            .map(|j| {
                let row = &self.w1[j * d..(j + 1) * d];
                self.b1[j] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect();
        let act: Vec<f64> = pre.iter().map(|&p| silu(p)).collect();
        let sum: Vec<f64> = (0..d)
            .map(|i| {
                let row = &self.w2[i * h..(i + 1) * h];
                input[i] + row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect();
        let output = if !normalize {
            sum.clone()
        } else if sum == input && (l2_norm(input) - 1.0).abs() <= 1e-12 {
            // Zero residual on a unit input: return it untouched.
            input.to_vec()
        } else {
            let n = l2_norm(&sum);
            if n == 0.0 {
                return Err(DeclipError::ZeroNorm);
            }
            sum.iter().map(|s| s / n).collect()
        };
        Ok(ResMlpTrace {
            input: input.to_vec(),
            pre,
            act,
            sum,
            output,
            normalized: normalize,
        })
    }

    /// Accumulates parameter gradients for upstream gradient `grad_out` and
    /// returns the gradient with respect to the input.
    pub fn backward(
        &self,
        trace: &ResMlpTrace,
        grad_out: &[f64],
        grads: &mut ResMlpGrads,
    ) -> Vec<f64> {
        let (d, h) = (self.dim, self.hidden);
        let grad_sum: Vec<f64> = if trace.normalized {
            let n = l2_norm(&trace.sum);
            let proj: f64 = trace.output.iter().zip(grad_out).map(|(o, g)| o * g).sum();
            grad_out
                .iter()
                .zip(&trace.output)
                .map(|(g, o)| (g - o * proj) / n)
                .collect()
        } else {
            grad_out.to_vec()
        };

        let mut grad_act = vec![0.0; h];
        for i in 0..d {
            let gi = grad_sum[i];
            if gi == 0.0 {
                continue;
            }
            let w_row = &self.w2[i * h..(i + 1) * h];
            let g_row = &mut grads.w2[i * h..(i + 1) * h];
            for j in 0..h {
                g_row[j] += gi * trace.act[j];
                grad_act[j] += gi * w_row[j];
            }
        }

        let mut grad_input = grad_sum;
        for j in 0..h {
            let gp = grad_act[j] * silu_grad(trace.pre[j]);
            if gp == 0.0 {
                continue;
            }
            grads.b1[j] += gp;
            let w_row = &self.w1[j * d..(j + 1) * d];
            let g_row = &mut grads.w1[j * d..(j + 1) * d];
            for i in 0..d {
                g_row[i] += gp * trace.input[i];
                grad_input[i] += gp * w_row[i];
            }
        }
        grad_input
    }
}
