use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{AttentionCnn, Tensor};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::softmax_cross_entropy;
use super::{LearnError, LearnResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 64,
            max_epochs: 100,
            split_ratio: 0.8,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> LearnResult<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(LearnError::Config(format!("split ratio {} must lie in (0, 1)", self.split_ratio)));
        }
        if self.batch_size == 0 {
            return Err(LearnError::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearnError::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

/// One model input, flattened channel-major to `in_channels * input_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model from the epoch with the best validation accuracy (training
    /// accuracy when there is no validation set). The initialization when no
    /// epoch ran.
    pub best: AttentionCnn,
    pub best_epoch: Option<usize>,
    /// Model after the final epoch.
    pub last: AttentionCnn,
    pub log: Vec<EpochLog>,
}

pub(crate) fn batch_tensor(model: &AttentionCnn, samples: &[&Sample]) -> LearnResult<Tensor> {
    let cfg = model.config();
    let width = cfg.in_channels * cfg.input_len;
    let mut data = Vec::with_capacity(samples.len() * width);
    for s in samples {
        if s.features.len() != width {
            return Err(LearnError::Config(format!(
                "sample has {} features, model expects {width}",
                s.features.len()
            )));
        }
        if s.label >= cfg.classes {
            return Err(LearnError::Label {
                label: s.label.to_string(),
            });
        }
        data.extend_from_slice(&s.features);
    }
    Ok(Tensor::new(&[samples.len(), cfg.in_channels, cfg.input_len], data)?)
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Inference-mode mean loss and accuracy.
fn score(model: &AttentionCnn, samples: &[Sample], batch_size: usize) -> LearnResult<(f64, f64)> {
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in samples.chunks(batch_size) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let logits = model.infer(&batch_tensor(model, &refs)?)?;
        let targets: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let (l, _) = softmax_cross_entropy(&logits, &targets)?;
        loss += l * chunk.len() as f64;
        let classes = model.num_classes();
        correct += logits
            .data
            .chunks_exact(classes)
            .zip(&targets)
            .filter(|(row, &t)| argmax(row) == t)
            .count();
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch Adam on softmax cross-entropy. Batches are reshuffled every
/// epoch from a generator seeded by `cfg.seed`; the last batch may be
/// partial. Training loss and accuracy come from the training-mode forward
/// passes of the epoch. `on_epoch` sees every log entry as it is produced.
pub fn train(
    mut model: AttentionCnn,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> LearnResult<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(LearnError::Config("training set is empty".into()));
    }
    let adam = AdamConfig::with_lr(cfg.learning_rate);
    let mut state = AdamState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = model.snapshot();
    let mut best_epoch = None;
    let mut best_acc = f64::NEG_INFINITY;
    let mut log = Vec::with_capacity(cfg.max_epochs);

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let ctx = |e: LearnError| LearnError::InTraining {
                epoch,
                batch: b + 1,
                source: Box::new(e),
            };
            let refs: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let x = batch_tensor(&model, &refs).map_err(ctx)?;
            let targets: Vec<usize> = refs.iter().map(|s| s.label).collect();
            model.zero_grad();
            let logits = model.forward(&x, true).map_err(|e| ctx(e.into()))?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &targets).map_err(ctx)?;
            if !loss.is_finite() {
                return Err(ctx(LearnError::NonFiniteGradient { name: "loss".into() }));
            }
            model.backward(&dlogits).map_err(|e| ctx(e.into()))?;
            adam_step(&mut model.parameters_mut(), &mut state, &adam).map_err(ctx)?;
            loss_sum += loss * idx.len() as f64;
            correct += logits
                .data
                .chunks_exact(model.num_classes())
                .zip(&targets)
                .filter(|(row, &t)| argmax(row) == t)
                .count();
        }
        let n = train_set.len() as f64;
        let (train_loss, train_acc) = (loss_sum / n, correct as f64 / n);
        let (val_loss, val_acc) = if val_set.is_empty() {
            (None, None)
        } else {
            let (l, a) = score(&model, val_set, cfg.batch_size)?;
            (Some(l), Some(a))
        };
        let entry = EpochLog {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
            seconds: started.elapsed().as_secs_f64(),
        };
        let acc = val_acc.unwrap_or(train_acc);
        if acc > best_acc {
            best_acc = acc;
            best = model.snapshot();
            best_epoch = Some(epoch);
        }
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: model.snapshot(),
        log,
    })
}

/// One JSON object per line.
pub fn write_log_jsonl<W: Write>(mut w: W, log: &[EpochLog]) -> LearnResult<()> {
    for entry in log {
        serde_json::to_writer(&mut w, entry)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
