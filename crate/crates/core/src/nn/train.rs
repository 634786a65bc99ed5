use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::Model;
use crate::autodiff::{Adam, AdamConfig, Parameter};
use crate::data::Dataset;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: AdamConfig::default().lr,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 0 is the untrained model; training epochs count from 1.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial: EpochMetrics,
    /// One row per requested epoch.
    pub epochs: Vec<EpochMetrics>,
    /// Epoch with the lowest test loss (0 when no epoch ran).
    pub best_epoch: usize,
    /// Test accuracy at `best_epoch`.
    pub accuracy: f64,
    pub seed: u64,
    pub wall_clock_s: f64,
    /// SHA-256 over the little-endian bytes of the final parameters.
    pub checksum: String,
}

impl TrainReport {
    /// The row at `best_epoch`.
    pub fn best(&self) -> &EpochMetrics {
        if self.best_epoch == 0 {
            &self.initial
        } else {
            &self.epochs[self.best_epoch - 1]
        }
    }
}

pub fn parameter_checksum(params: &[Parameter]) -> String {
    let mut h = Sha256::new();
    for p in params {
        for v in p.value.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn measure(model: &Model, train: &Dataset, test: &Dataset, epoch: usize) -> Result<EpochMetrics> {
    let tr = model.evaluate(train, 0.0, 0)?;
    let te = model.evaluate(test, 0.0, 0)?;
    for v in [tr.loss, te.loss] {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("loss became {v} at epoch {epoch}")));
        }
    }
    Ok(EpochMetrics {
        epoch,
        train_loss: tr.loss,
        train_accuracy: tr.accuracy,
        test_loss: te.loss,
        test_accuracy: te.accuracy,
    })
}

/// Adam on shuffled mini-batches. After the last epoch the model holds the
/// parameters of the epoch with the lowest test loss.
pub fn train(model: &mut Model, train: &Dataset, test: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    let start = Instant::now();
    if train.is_empty() || test.is_empty() {
        return Err(Error::Data("training needs non-empty train and test sets".into()));
    }
    let classes = model.spec().n_classes;
    for ds in [train, test] {
        if ds.n_classes() != classes {
            return Err(Error::Data(format!(
                "{} dataset has {} classes, model has {classes}",
                ds.split(),
                ds.n_classes()
            )));
        }
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let initial = measure(model, train, test, 0)?;
    let mut best = (initial.test_loss, 0, model.params().to_vec());
    let mut adam = {
        let refs: Vec<&Parameter> = model.params().iter().collect();
        Adam::new(
            AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
            &refs,
        )
    };
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng::stream(config.seed, &[0xE90C, epoch as u64]));
        for batch in order.chunks(config.batch_size) {
            let (x, y) = train.gather(batch);
            let loss = model.accumulate_gradients(&x, &y)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss became {loss} at epoch {epoch}")));
            }
            let mut refs: Vec<&mut Parameter> = model.params_mut().iter_mut().collect();
            adam.step(&mut refs)?;
        }
        let m = measure(model, train, test, epoch)?;
        if m.test_loss < best.0 {
            best = (m.test_loss, epoch, model.params().to_vec());
        }
        epochs.push(m);
    }
    let (_, best_epoch, params) = best;
    model.params_mut().clone_from_slice(&params);
    model.params_mut().iter_mut().for_each(Parameter::clear_grad);
    let mut report = TrainReport {
        initial,
        epochs,
        best_epoch,
        accuracy: 0.0,
        seed: config.seed,
        wall_clock_s: start.elapsed().as_secs_f64(),
        checksum: parameter_checksum(model.params()),
    };
    report.accuracy = report.best().test_accuracy;
    Ok(report)
}
