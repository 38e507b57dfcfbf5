use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::model::DeclipModel;
use super::optim::AdamW;
use super::DEFAULT_TAU;
use crate::data::I2TRecord;
use crate::embedding::EmbeddingVector;
use crate::error::{DeclipError, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub tau: f64,
    pub seed: u64,
    /// When set, a checkpoint is written after every epoch.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    /// Desk-scale profile used for the synthetic benchmark.
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 50,
            learning_rate: 1e-3,
            weight_decay: 5e-2,
            tau: DEFAULT_TAU,
            seed: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    /// Large-scale profile: batch 1024, 200 epochs, lr 1e-5, weight decay 5e-2, τ = 0.07.
    pub fn large_scale() -> Self {
        Self {
            batch_size: 1024,
            epochs: 200,
            learning_rate: 1e-5,
            weight_decay: 5e-2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DeclipError::InvalidConfig(m));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be non-negative, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub loss_p: f64,
    pub loss_s: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DeclipModel,
    pub log: Vec<EpochLog>,
    /// Mean loss of the untrained model over the first epoch's batches.
    pub initial_loss: f64,
}

/// Trains both projectors; the encoder is only ever read.
///
/// Each epoch visits a fresh seeded permutation of the dataset in full
/// batches of `batch_size` (a trailing partial batch is skipped). Only
/// projector parameters are updated.
pub fn train(model: &DeclipModel, dataset: &[I2TRecord], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.len() < config.batch_size {
        return Err(DeclipError::DatasetTooSmall {
            len: dataset.len(),
            batch_size: config.batch_size,
        });
    }
    let mut model = model.clone();
    model.set_tau(config.tau)?;

    let encoder = model.encoder_arc();
    let images = dataset
        .iter()
        .map(|r| encoder.encode_image_key(&r.image_ref))
        .collect::<Result<Vec<EmbeddingVector>>>()?;
    let t_p = dataset
        .iter()
        .map(|r| encoder.encode_text(&r.t_p))
        .collect::<Result<Vec<_>>>()?;
    let t_s = dataset
        .iter()
        .map(|r| encoder.encode_text(&r.t_s))
        .collect::<Result<Vec<_>>>()?;

    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| DeclipError::io(dir, e))?;
    }

    let epoch_order = |epoch: usize| {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        SplitMix64::new(derive_seed(config.seed, epoch as u64)).shuffle(&mut order);
        order
    };
    let mut initial_sum = 0.0;
    let first = epoch_order(0);
    let batches = first.chunks_exact(config.batch_size);
    let n_batches = batches.len();
    for (step, batch) in batches.enumerate() {
        let img: Vec<_> = batch.iter().map(|&i| &images[i]).collect();
        let tp: Vec<_> = batch.iter().map(|&i| &t_p[i]).collect();
        let ts: Vec<_> = batch.iter().map(|&i| &t_s[i]).collect();
        let out = model.total_loss_embeddings(&img, &tp, &ts)?;
        if !out.total.is_finite() {
            return Err(DeclipError::NonFiniteLoss {
                epoch: 0,
                step,
                detail: format!("initial loss {}", out.total),
            });
        }
        initial_sum += out.total;
    }
    let initial_loss = initial_sum / n_batches as f64;

    let mut opt = AdamW::new(config.learning_rate, config.weight_decay).rounding_to_f32();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let order = epoch_order(epoch);
        let (mut sum, mut sum_p, mut sum_s, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for (step, batch) in order.chunks_exact(config.batch_size).enumerate() {
            let img: Vec<_> = batch.iter().map(|&i| &images[i]).collect();
            let tp: Vec<_> = batch.iter().map(|&i| &t_p[i]).collect();
            let ts: Vec<_> = batch.iter().map(|&i| &t_s[i]).collect();
            let out = model
                .total_loss_embeddings(&img, &tp, &ts)
                .map_err(|e| DeclipError::NonFiniteLoss {
                    epoch,
                    step,
                    detail: e.to_string(),
                })?;
            if !out.total.is_finite() || !out.grads.p.is_finite() || !out.grads.s.is_finite() {
                return Err(DeclipError::NonFiniteLoss {
                    epoch,
                    step,
                    detail: format!("loss {} (L_p {}, L_s {})", out.total, out.loss_p, out.loss_s),
                });
            }
            let [w1p, b1p, w2p] = model.proj_p.tensors_mut();
            let [w1s, b1s, w2s] = model.proj_s.tensors_mut();
            let [gw1p, gb1p, gw2p] = out.grads.p.tensors();
            let [gw1s, gb1s, gw2s] = out.grads.s.tensors();
            opt.step(
                &mut [w1p, b1p, w2p, w1s, b1s, w2s],
                &[gw1p, gb1p, gw2p, gw1s, gb1s, gw2s],
            );
            if !model.proj_p.is_finite() || !model.proj_s.is_finite() {
                return Err(DeclipError::NonFiniteLoss {
                    epoch,
                    step,
                    detail: "parameters became non-finite after the update".into(),
                });
            }
            sum += out.total;
            sum_p += out.loss_p;
            sum_s += out.loss_s;
            steps += 1;
        }
        let n = steps as f64;
        log.push(EpochLog {
            epoch,
            mean_loss: sum / n,
            loss_p: sum_p / n,
            loss_s: sum_s / n,
            wall_s: started.elapsed().as_secs_f64(),
        });
        if let Some(dir) = &config.checkpoint_dir {
            save_checkpoint(&model, dir.join(format!("epoch_{epoch:03}.ckpt")))?;
            save_checkpoint(&model, dir.join("last.ckpt"))?;
        }
    }
    Ok(TrainOutcome { model, log, initial_loss })
}

/// Writes one JSON object per epoch.
pub fn write_train_log(log: &[EpochLog], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| DeclipError::io(path, e))?;
    for entry in log {
        let line = serde_json::to_string(entry).expect("log entries serialize");
        writeln!(file, "{line}").map_err(|e| DeclipError::io(path, e))?;
    }
    Ok(())
}
