use serde::{Deserialize, Serialize};

use super::{AdamConfig, AdamState, ClassifierModel};
use crate::core_math::{RngStream, Tensor};
use crate::error::{Error, Result};
use crate::losses_mi::Targets;

/// Stream id reserved for minibatch shuffling; stream 0 initialises weights.
pub const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(seed: u64, epochs: usize) -> Self {
        Self {
            epochs,
            batch_size: 128,
            adam: AdamConfig::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochSummary {
    pub epoch: usize,
    /// Mean per-example training loss over the epoch's minibatches.
    pub train_loss: f64,
}

/// Minibatch Adam over shuffled rows of `inputs`. `on_epoch` runs after every epoch.
pub fn train<F>(
    model: &mut ClassifierModel,
    inputs: &Tensor,
    targets: &Targets,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochSummary>>
where
    F: FnMut(&EpochSummary, &ClassifierModel) -> Result<()>,
{
    if cfg.batch_size == 0 {
        return Err(Error::contract("batch size must be positive"));
    }
    let n = inputs.shape()[0];
    if n == 0 || targets.len() != n {
        return Err(Error::contract(format!(
            "{} targets for {n} training rows",
            targets.len()
        )));
    }
    let mut adam = AdamState::new(cfg.adam, model.network.params());
    let mut rng = RngStream::new(cfg.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for rows in order.chunks(cfg.batch_size) {
            let (loss, grads) = model
                .network
                .loss_and_grads(inputs, targets, rows, &model.head)?;
            total += loss * rows.len() as f64;
            adam.step(&mut model.network.params_mut(), &grads)?;
        }
        let summary = EpochSummary {
            epoch,
            train_loss: total / n as f64,
        };
        on_epoch(&summary, model)?;
        history.push(summary);
    }
    Ok(history)
}
