use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, OptimizerKind};
use super::param::{Grads, Param};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 50,
            early_stop_patience: 5,
            validation_fraction: 0.2,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            Validation,
            "learning_rate must be positive"
        );
        ensure!(self.batch_size >= 1, Validation, "batch_size must be positive");
        ensure!(
            (0.0..1.0).contains(&self.validation_fraction),
            Validation,
            "validation_fraction must lie in [0, 1)"
        );
        Ok(())
    }
}

/// Per-epoch losses. `best_epoch` indexes `val_loss`; the model holds that epoch's parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_train_loss: f64,
    pub initial_val_loss: Option<f64>,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn final_train_loss(&self) -> f64 {
        self.train_loss.last().copied().unwrap_or(self.initial_train_loss)
    }

    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.val_loss[e])
    }
}

/// A model whose per-example loss has a hand-written gradient.
pub trait Trainable: Sync {
    type Example: Sync;

    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
    /// Loss of one example; gradients are accumulated into `grads` (ordered like `params`).
    fn loss_and_grad(&self, example: &Self::Example, grads: &mut Grads) -> Result<f64>;
    fn loss(&self, example: &Self::Example) -> Result<f64>;
}

/// Mean loss over `examples`, summed in order.
pub fn mean_loss<M: Trainable>(model: &M, examples: &[M::Example]) -> Result<f64> {
    let losses = examples
        .par_iter()
        .map(|e| model.loss(e))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

fn snapshot<M: Trainable>(model: &M) -> Vec<Vec<f64>> {
    model.params().iter().map(|p| p.values().to_vec()).collect()
}

fn restore<M: Trainable>(model: &mut M, values: &[Vec<f64>]) {
    for (p, v) in model.params_mut().into_iter().zip(values) {
        p.values_mut().copy_from_slice(v);
    }
}

/// Mini-batch training with per-epoch shuffling and early stopping on `val`.
///
/// Per-example gradients are computed in parallel and summed in example order,
/// so a fixed seed reproduces the same parameters bit for bit.
pub fn fit<M: Trainable>(model: &mut M, train: &[M::Example], val: &[M::Example], cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    ensure!(!train.is_empty(), Validation, "empty training set");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = Optimizer::new(cfg.optimizer);
    let mut history = TrainHistory {
        initial_train_loss: mean_loss(model, train)?,
        initial_val_loss: if val.is_empty() { None } else { Some(mean_loss(model, val)?) },
        ..TrainHistory::default()
    };
    let mut best: Option<(f64, Vec<Vec<f64>>)> = history.initial_val_loss.map(|l| (l, snapshot(model)));
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let per_example = batch
                .par_iter()
                .map(|&i| {
                    let mut g = Grads::zeros_like(model.params());
                    let l = model.loss_and_grad(&train[i], &mut g)?;
                    Ok((l, g))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut total = Grads::zeros_like(model.params());
            for (l, g) in &per_example {
                epoch_loss += l;
                total.add_assign(g);
            }
            total.scale(1.0 / batch.len() as f64);
            if !total.all_finite() {
                return Err(Error::Degenerate(format!("non-finite gradient in epoch {epoch}")));
            }
            let mut params = model.params_mut();
            total.store_into(params.iter_mut().map(|p| &mut **p));
            optimizer.step(&mut params, cfg.learning_rate);
        }
        history.train_loss.push(epoch_loss / train.len() as f64);

        if val.is_empty() {
            continue;
        }
        let v = mean_loss(model, val)?;
        history.val_loss.push(v);
        match &best {
            Some((b, _)) if v >= *b => {
                stale += 1;
                if stale >= cfg.early_stop_patience.max(1) {
                    break;
                }
            }
            _ => {
                best = Some((v, snapshot(model)));
                history.best_epoch = Some(epoch);
                stale = 0;
            }
        }
    }
    if let Some((_, values)) = &best {
        restore(model, values);
    }
    Ok(history)
}

/// Deterministic split of `n` items into `(train, validation)` index lists, each sorted.
/// At least one item stays on each side when `n >= 2`.
pub fn split_validation(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    if n < 2 || fraction <= 0.0 {
        return ((0..n).collect(), Vec::new());
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}
