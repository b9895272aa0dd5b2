//! Mini-batch training loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::network::{ArchConfig, Network};
use super::optim::{AmsGrad, PlateauSchedule};
use crate::blocky::DiagnosisLabel;
use crate::rng::{derive_seed, stream, tag};
use crate::{Error, Result};

/// Samples per work item. Gradients are summed per chunk and chunks are
/// reduced in index order, so results do not depend on how chunks are
/// scheduled.
pub const CHUNK: usize = 8;

/// Runs independent work items, possibly in parallel, returning results in
/// index order.
pub trait Executor {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs items one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecipe {
    pub epochs: u32,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub plateau_factor: f64,
    pub plateau_patience: u32,
    pub batch_size: usize,
    /// Random horizontal and vertical flips, each with probability 1/2.
    pub augmentation: bool,
    pub seed: u64,
}

impl Default for TrainingRecipe {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-3,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            plateau_factor: 0.4,
            plateau_patience: 4,
            batch_size: 64,
            augmentation: true,
            seed: 0,
        }
    }
}

impl TrainingRecipe {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.weight_decay, self.plateau_factor, self.eps]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("training hyperparameters must be positive".into()));
        }
        if self.plateau_patience < 1 {
            return Err(Error::Config("plateau patience must be at least 1".into()));
        }
        if self.plateau_factor >= 1.0 {
            return Err(Error::Config("plateau factor must be below 1".into()));
        }
        Ok(())
    }
}

/// Flattened images with their labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledImages {
    pub input_len: usize,
    pub pixels: Vec<f64>,
    pub labels: Vec<DiagnosisLabel>,
}

impl LabeledImages {
    pub fn new(input_len: usize) -> Self {
        Self { input_len, pixels: Vec::new(), labels: Vec::new() }
    }

    pub fn push(&mut self, image: &[f64], label: DiagnosisLabel) -> Result<()> {
        if image.len() != self.input_len {
            return Err(Error::Shape { expected: self.input_len, actual: image.len() });
        }
        self.pixels.extend_from_slice(image);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.pixels[i * self.input_len..(i + 1) * self.input_len]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u32,
    /// Learning rate used during this epoch.
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Whether this epoch produced the retained checkpoint so far.
    pub checkpoint: bool,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Network,
    pub log: Vec<EpochLog>,
    pub best_epoch: u32,
    pub best_val_loss: f64,
}

/// Copies a square image into `dst`, mirrored left-right and/or top-bottom.
pub fn flip_into(src: &[f64], size: usize, horizontal: bool, vertical: bool, dst: &mut [f64]) {
    for y in 0..size {
        let sy = if vertical { size - 1 - y } else { y };
        let row = &src[sy * size..(sy + 1) * size];
        let out = &mut dst[y * size..(y + 1) * size];
        if horizontal {
            out.iter_mut().zip(row.iter().rev()).for_each(|(o, v)| *o = *v);
        } else {
            out.copy_from_slice(row);
        }
    }
}

struct ChunkResult {
    grad: Vec<f64>,
    loss: f64,
    correct: usize,
}

/// Mean loss and accuracy over a dataset.
pub fn evaluate<E: Executor>(net: &Network, data: &LabeledImages, exec: &E) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Training("evaluation set is empty".into()));
    }
    let n_chunks = data.len().div_ceil(CHUNK);
    let parts = exec.map(n_chunks, |c| -> Result<(f64, usize)> {
        let mut loss = 0.0;
        let mut correct = 0;
        for i in c * CHUNK..((c + 1) * CHUNK).min(data.len()) {
            let logits = net.logits(data.image(i))?;
            let target = data.labels[i].class_index();
            let (l, _) = super::network::cross_entropy(&logits, target);
            loss += l;
            correct += (super::network::argmax(&logits) == target) as usize;
        }
        Ok((loss, correct))
    });
    let mut loss = 0.0;
    let mut correct = 0;
    for p in parts {
        let (l, c) = p?;
        loss += l;
        correct += c;
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

/// Trains from a fresh initialisation and returns the checkpoint with the
/// lowest validation loss. `on_epoch` sees each log line as it is produced.
pub fn train<E: Executor>(
    train_set: &LabeledImages,
    val_set: &LabeledImages,
    recipe: &TrainingRecipe,
    arch: &ArchConfig,
    exec: &E,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainingOutcome> {
    recipe.validate()?;
    arch.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Training("training and validation sets must be non-empty".into()));
    }
    for set in [train_set, val_set] {
        if set.input_len != arch.input_len() {
            return Err(Error::Shape { expected: arch.input_len(), actual: set.input_len });
        }
    }

    let mut net = Network::new(arch.clone(), &mut stream(derive_seed(recipe.seed, tag("init"))))?;
    let mut opt = AmsGrad::new(net.param_count(), recipe.beta1, recipe.beta2, recipe.eps, recipe.weight_decay);
    let mut schedule = PlateauSchedule::new(recipe.learning_rate, recipe.plateau_factor, recipe.plateau_patience);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(Vec<f64>, u32, f64)> = None;
    let mut log = Vec::with_capacity(recipe.epochs as usize);

    for epoch in 0..recipe.epochs {
        let mut shuffle_rng = stream(derive_seed(recipe.seed, derive_seed(tag("shuffle"), epoch as u64)));
        order.shuffle(&mut shuffle_rng);
        // two flip bits per position in `order`
        let flips: Vec<u8> = if recipe.augmentation {
            let mut rng = stream(derive_seed(recipe.seed, derive_seed(tag("flips"), epoch as u64)));
            (0..order.len()).map(|_| rng.random::<u8>() & 3).collect()
        } else {
            vec![0; order.len()]
        };
        let lr = schedule.lr;
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;

        for (batch, batch_flips) in order.chunks(recipe.batch_size).zip(flips.chunks(recipe.batch_size)) {
            let n_chunks = batch.len().div_ceil(CHUNK);
            let model = &net;
            let parts = exec.map(n_chunks, |c| -> Result<ChunkResult> {
                let mut grad = vec![0.0; model.param_count()];
                let mut loss = 0.0;
                let mut correct = 0;
                let mut buf = vec![0.0; train_set.input_len];
                let range = c * CHUNK..((c + 1) * CHUNK).min(batch.len());
                for (&i, &f) in batch[range.clone()].iter().zip(&batch_flips[range]) {
                    let image = if f == 0 {
                        train_set.image(i)
                    } else {
                        flip_into(train_set.image(i), arch.input_size, f & 1 != 0, f & 2 != 0, &mut buf);
                        &buf[..]
                    };
                    let (l, ok) = model.loss_and_grad(image, train_set.labels[i].class_index(), &mut grad)?;
                    loss += l;
                    correct += ok as usize;
                }
                Ok(ChunkResult { grad, loss, correct })
            });
            let mut grad = vec![0.0; net.param_count()];
            let mut batch_loss = 0.0;
            for part in parts {
                let part = part?;
                for (g, p) in grad.iter_mut().zip(&part.grad) {
                    *g += p;
                }
                batch_loss += part.loss;
                epoch_correct += part.correct;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Training(format!("non-finite training loss in epoch {epoch}")));
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            opt.update(&mut net.params, &grad, lr);
            epoch_loss += batch_loss;
        }

        let (val_loss, val_accuracy) = evaluate(&net, val_set, exec)?;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss in epoch {epoch}")));
        }
        let improved = best.as_ref().is_none_or(|(_, _, b)| val_loss < *b);
        if improved {
            best = Some((net.params.clone(), epoch, val_loss));
        }
        schedule.step(val_loss);
        let entry = EpochLog {
            epoch,
            learning_rate: lr,
            train_loss: epoch_loss / train_set.len() as f64,
            train_accuracy: epoch_correct as f64 / train_set.len() as f64,
            val_loss,
            val_accuracy,
            checkpoint: improved,
        };
        on_epoch(&entry);
        log.push(entry);
    }

    let (params, best_epoch, best_val_loss) = best.expect("at least one epoch");
    Ok(TrainingOutcome { model: Network::from_params(arch.clone(), params)?, log, best_epoch, best_val_loss })
}
