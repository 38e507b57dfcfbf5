//! Linear probes: how well a frozen feature set predicts a discrete factor.
//!
//! Features are standardized with training-split statistics, then a
//! multinomial logistic regression is fit by full-batch gradient descent.
//! Accuracy is measured on the held-out split.

use crate::error::{DeclipError, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub train_fraction: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    /// Rescale each feature to unit variance on the training split.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            iterations: 300,
            learning_rate: 0.5,
            l2: 1e-3,
            seed: 0,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
}

struct Softmax {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Softmax {
    fn probs(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .w
            .iter()
            .zip(&self.b)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    fn predict(&self, x: &[f64]) -> usize {
        let p = self.probs(x);
        (0..p.len()).fold(0, |best, k| if p[k] > p[best] { k } else { best })
    }
}

fn accuracy(model: &Softmax, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let hits = xs.iter().zip(ys).filter(|(x, &y)| model.predict(x) == y).count();
    hits as f64 / xs.len() as f64
}

/// Trains on a seeded split of `(features, labels)` and reports accuracy.
pub fn linear_probe(features: &[Vec<f64>], labels: &[usize], config: &ProbeConfig) -> Result<ProbeResult> {
    if features.len() != labels.len() {
        return Err(DeclipError::LengthMismatch(features.len(), labels.len()));
    }
    let n = features.len();
    let n_train = (n as f64 * config.train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(DeclipError::InsufficientData(format!(
            "{n} samples cannot be split with train fraction {}",
            config.train_fraction
        )));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(DeclipError::InvalidConfig("features have inconsistent dimensions".into()));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);

    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(config.seed).shuffle(&mut order);
    let (train_idx, test_idx) = order.split_at(n_train);

    let mut mean = vec![0.0; dim];
    for &i in train_idx {
        for (m, x) in mean.iter_mut().zip(&features[i]) {
            *m += x / n_train as f64;
        }
    }
    let mut sd = vec![0.0; dim];
    for &i in train_idx {
        for k in 0..dim {
            sd[k] += (features[i][k] - mean[k]).powi(2) / n_train as f64;
        }
    }
    let sd: Vec<f64> = sd
        .into_iter()
        .map(|v| if config.standardize && v > 1e-24 { v.sqrt() } else { 1.0 })
        .collect();
    let standardize = |idx: &[usize]| -> Vec<Vec<f64>> {
        idx.iter()
            .map(|&i| (0..dim).map(|k| (features[i][k] - mean[k]) / sd[k]).collect())
            .collect()
    };
    let x_train = standardize(train_idx);
    let x_test = standardize(test_idx);
    let y_train: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();

    let mut model = Softmax {
        w: vec![vec![0.0; dim]; classes],
        b: vec![0.0; classes],
    };
    let scale = 1.0 / n_train as f64;
    for _ in 0..config.iterations {
        let mut gw = vec![vec![0.0; dim]; classes];
        let mut gb = vec![0.0; classes];
        for (x, &y) in x_train.iter().zip(&y_train) {
            let p = model.probs(x);
            for k in 0..classes {
                let r = (p[k] - f64::from(u8::from(k == y))) * scale;
                gb[k] += r;
                for (g, xi) in gw[k].iter_mut().zip(x) {
                    *g += r * xi;
                }
            }
        }
        for k in 0..classes {
            model.b[k] -= config.learning_rate * gb[k];
            for (w, g) in model.w[k].iter_mut().zip(&gw[k]) {
                *w -= config.learning_rate * (g + config.l2 * *w);
            }
        }
    }
    Ok(ProbeResult {
        train_accuracy: accuracy(&model, &x_train, &y_train),
        test_accuracy: accuracy(&model, &x_test, &y_test),
        n_train,
        n_test: n - n_train,
    })
}
