use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::net::adam::AdamState;
use crate::net::model::{backward, batch_loss, Example};
use crate::net::spec::NetworkSpec;
use crate::net::weights::NetworkWeights;
use crate::rng;

/// Loss above which training is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// Epoch phases of constant learning rate, run in order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainSchedule {
    pub batch_size: usize,
    /// `(epochs, learning rate)` per phase.
    pub phases: Vec<(usize, f64)>,
    /// Seeds weight initialisation and batch shuffling.
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule { batch_size: 10, phases: alloc::vec![(3, 1e-3), (3, 1e-4), (1, 1e-5)], seed: 7 }
    }
}

impl TrainSchedule {
    pub fn total_epochs(&self) -> usize {
        self.phases.iter().map(|p| p.0).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.phases.iter().any(|&(_, lr)| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::InvalidConfig("learning rates must be positive and finite".into()));
        }
        Ok(())
    }

    /// Learning rate for a zero-based epoch index.
    pub fn lr_at(&self, epoch: usize) -> Option<f64> {
        let mut start = 0;
        for &(n, lr) in &self.phases {
            if epoch < start + n {
                return Some(lr);
            }
            start += n;
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLog {
    /// One-based epoch number.
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the whole dataset after the epoch.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub weights: NetworkWeights,
    /// Dataset loss of the freshly initialised network.
    pub initial_loss: f64,
    pub epochs: Vec<EpochLog>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_loss, |e| e.loss)
    }
}

/// Mean loss over a dataset, evaluated in chunks.
pub fn dataset_loss(data: &[Example<'_>], w: &NetworkWeights) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (ci, chunk) in data.chunks(64).enumerate() {
        total += match batch_loss(chunk, w) {
            Ok(l) => l * chunk.len() as f64,
            Err(Error::NonFiniteLoss { sample }) => return Err(Error::NonFiniteLoss { sample: ci * 64 + sample }),
            Err(e) => return Err(e),
        };
    }
    Ok(total / data.len() as f64)
}

/// Trains a fresh network on `data` (latent correction held at zero).
pub fn train(data: &[Example<'_>], spec: &NetworkSpec, schedule: &TrainSchedule) -> Result<TrainReport> {
    train_with(data, NetworkWeights::init(spec, schedule.seed)?, schedule, |_, _| {})
}

/// Like [`train`] but starting from `weights`, calling `on_epoch` with the
/// weights after every completed epoch (for checkpoints and logging).
///
/// On divergence the error carries the epoch and batch; the last weights
/// handed to `on_epoch` are the last good ones.
pub fn train_with<F>(data: &[Example<'_>], mut weights: NetworkWeights, schedule: &TrainSchedule, mut on_epoch: F) -> Result<TrainReport>
where
    F: FnMut(&EpochLog, &NetworkWeights),
{
    schedule.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let initial_loss = dataset_loss(data, &weights)?;
    let mut adam = AdamState::new(&weights, schedule.phases.first().map_or(0.0, |p| p.1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng::stream(schedule.seed, 0x5417);
    let mut epochs = Vec::with_capacity(schedule.total_epochs());
    let mut batch: Vec<Example<'_>> = Vec::with_capacity(schedule.batch_size);
    for epoch in 0..schedule.total_epochs() {
        adam.lr = schedule.lr_at(epoch).expect("epoch within schedule");
        order.shuffle(&mut shuffle_rng);
        for (bi, idx) in order.chunks(schedule.batch_size).enumerate() {
            batch.clear();
            batch.extend(idx.iter().map(|&i| data[i]));
            let (loss, grads) = match backward(&batch, &weights) {
                Ok(r) => r,
                Err(Error::NonFiniteLoss { .. }) => {
                    return Err(Error::Diverged { epoch: epoch + 1, batch: bi, loss: f64::NAN })
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                return Err(Error::Diverged { epoch: epoch + 1, batch: bi, loss });
            }
            adam.update(&mut weights, &grads)?;
        }
        let loss = match dataset_loss(data, &weights) {
            Ok(l) if l.is_finite() && l <= DIVERGENCE_LOSS => l,
            Ok(l) => return Err(Error::Diverged { epoch: epoch + 1, batch: usize::MAX, loss: l }),
            Err(Error::NonFiniteLoss { .. }) => {
                return Err(Error::Diverged { epoch: epoch + 1, batch: usize::MAX, loss: f64::NAN })
            }
            Err(e) => return Err(e),
        };
        let log = EpochLog { epoch: epoch + 1, lr: adam.lr, loss };
        on_epoch(&log, &weights);
        epochs.push(log);
    }
    Ok(TrainReport { weights, initial_loss, epochs })
}
