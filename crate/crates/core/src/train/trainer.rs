use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{lr_at, TrainConfig};
use crate::arch::{Checkpoint, FusionMode, SegModel};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::label::{LabelImage, IGNORE_INDEX};
use crate::ops::softmax_xent_pixelwise;
use crate::tensor::Tensor;

/// Classical momentum SGD: `v <- mu v - lr g`, `w <- w + v`.
#[derive(Debug, Clone, Default)]
pub struct MomentumSgd {
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl MomentumSgd {
    pub fn new(momentum: f64) -> Self {
        MomentumSgd {
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// Applies one update. `trainable[i] == false` leaves parameter `i` untouched.
    pub fn step(&mut self, params: &mut [&mut [f64]], trainable: &[bool], grads: &[Vec<f64>], lr: f64) {
        if self.velocity.len() != params.len() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        for (i, p) in params.iter_mut().enumerate() {
            if !trainable[i] {
                continue;
            }
            let v = &mut self.velocity[i];
            for ((w, vi), g) in p.iter_mut().zip(v.iter_mut()).zip(&grads[i]) {
                *vi = self.momentum * *vi - lr * g;
                *w += *vi;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    pub pixel_accuracy: f64,
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_pixel_acc: f64,
}

pub fn write_epoch_csv<W: Write>(logs: &[EpochLog], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in logs {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn correct_pixels(scores: &Tensor, labels: &[LabelImage]) -> (usize, usize) {
    let [_, c, h, w] = scores.shape().0;
    let plane = h * w;
    let s = scores.data();
    let (mut hit, mut total) = (0, 0);
    for (b, l) in labels.iter().enumerate() {
        let base = b * c * plane;
        for (p, &t) in l.pixels().iter().enumerate() {
            if t == IGNORE_INDEX {
                continue;
            }
            let mut best = 0;
            for k in 1..c {
                if s[base + k * plane + p] > s[base + best * plane + p] {
                    best = k;
                }
            }
            total += 1;
            hit += usize::from(best == t as usize);
        }
    }
    (hit, total)
}

fn batch_of(samples: &[&Sample]) -> Result<(Tensor, Vec<LabelImage>)> {
    let images: Vec<Tensor> = samples.iter().map(|s| s.image.clone()).collect();
    let labels = samples.iter().map(|s| s.label.clone()).collect();
    Ok((Tensor::stack(&images)?, labels))
}

/// Owns a model and its optimizer state for the duration of a run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: SegModel,
    pub config: TrainConfig,
    optimizer: MomentumSgd,
}

impl Trainer {
    pub fn new(model: SegModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            model,
            optimizer: MomentumSgd::new(config.momentum),
            config,
        })
    }

    /// Visit order for `epoch`: a permutation seeded by `(seed, epoch)`.
    pub fn visit_order(&self, len: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..len).collect();
        let mut rng = epoch_rng(self.config.seed, epoch, 0x5eed);
        order.shuffle(&mut rng);
        order
    }

    pub fn train_epoch(&mut self, data: &[Sample], epoch: usize) -> Result<EpochStats> {
        if data.is_empty() {
            return Err(Error::Data("training split is empty".into()));
        }
        let lr = lr_at(&self.config, epoch)?;
        let order = self.visit_order(data.len(), epoch);
        let mut dropout_rng = epoch_rng(self.config.seed, epoch, 0xd10d);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        let (mut hit, mut total) = (0, 0);
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let samples: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            let (images, labels) = batch_of(&samples)?;
            let trace = self
                .model
                .trace(&images, FusionMode::Full, Some(&mut dropout_rng))?;
            let (loss, grad) = softmax_xent_pixelwise(trace.output(), &labels, IGNORE_INDEX)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            let (h, t) = correct_pixels(trace.output(), &labels);
            hit += h;
            total += t;
            let grads = self.model.backward(&trace, &grad)?;
            drop(trace);
            let mut params = self.model.params_mut();
            let trainable: Vec<bool> = params.iter().map(|p| p.trainable).collect();
            let mut slices: Vec<&mut [f64]> = params.iter_mut().map(|p| &mut *p.data).collect();
            self.optimizer.step(&mut slices, &trainable, &grads.0, lr);
            loss_sum += loss;
            batches += 1;
        }
        Ok(EpochStats {
            loss: loss_sum / batches as f64,
            pixel_accuracy: if total == 0 { 0.0 } else { hit as f64 / total as f64 },
        })
    }

    /// Trains for `config.epochs`, validating after every epoch.
    pub fn fit(mut self, train: &[Sample], val: &[Sample], tier: &str) -> Result<FitOutcome> {
        let mut logs = Vec::with_capacity(self.config.epochs);
        let mut best: Option<(f64, Checkpoint)> = None;
        for epoch in 0..self.config.epochs {
            let stats = self.train_epoch(train, epoch)?;
            let v = if val.is_empty() {
                stats
            } else {
                validate(&self.model, val)?
            };
            logs.push(EpochLog {
                epoch,
                lr: lr_at(&self.config, epoch)?,
                train_loss: stats.loss,
                val_loss: v.loss,
                val_pixel_acc: v.pixel_accuracy,
            });
            if best.as_ref().map_or(true, |(l, _)| v.loss < *l) {
                let mut ck = Checkpoint::from_model(&self.model, tier);
                ck.meta.epochs_trained = epoch + 1;
                best = Some((v.loss, ck));
            }
        }
        let mut last = Checkpoint::from_model(&self.model, tier);
        last.meta.epochs_trained = self.config.epochs;
        Ok(FitOutcome {
            model: self.model,
            last,
            best: best.map(|(_, c)| c).expect("at least one epoch"),
            logs,
        })
    }
}

/// Result of [`Trainer::fit`]; `last` is the headline checkpoint.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: SegModel,
    pub last: Checkpoint,
    pub best: Checkpoint,
    pub logs: Vec<EpochLog>,
}

fn epoch_rng(seed: u64, epoch: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((epoch as u128) << 20);
    rng
}

/// Mean loss and pixel accuracy over `split`, one image at a time; never mutates the model.
pub fn validate(model: &SegModel, split: &[Sample]) -> Result<EpochStats> {
    if split.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    let (mut loss_sum, mut hit, mut total) = (0.0, 0, 0);
    for s in split {
        let scores = model.forward(&s.image)?;
        let labels = std::slice::from_ref(&s.label);
        let (loss, _) = softmax_xent_pixelwise(&scores, labels, IGNORE_INDEX)?;
        let (h, t) = correct_pixels(&scores, labels);
        loss_sum += loss;
        hit += h;
        total += t;
    }
    Ok(EpochStats {
        loss: loss_sum / split.len() as f64,
        pixel_accuracy: if total == 0 { 0.0 } else { hit as f64 / total as f64 },
    })
}
