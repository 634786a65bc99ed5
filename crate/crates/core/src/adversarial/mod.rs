//! Fast gradient sign attacks and robustness evaluation under inference-time
//! dropout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::argmax_rows;
use crate::data::Dataset;
use crate::nn::Model;
use crate::rng;
use crate::{Error, Result};

const ATTACK_STREAM: u64 = 0xA77A;
const DEFENSE_STREAM: u64 = 0xDEFE;

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `clamp(x + ε·sign(g), 0, 1)` elementwise, with `sign(0) = 0`.
pub fn fgsm_step(x: &[f64], grad: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::Config(format!("attack strength {epsilon} must be a finite value >= 0")));
    }
    if x.len() != grad.len() {
        return Err(Error::Dimension(format!(
            "{} inputs but {} gradient entries",
            x.len(),
            grad.len()
        )));
    }
    if epsilon == 0.0 {
        return Ok(x.to_vec());
    }
    Ok(x.iter()
        .zip(grad)
        .map(|(v, g)| (v + epsilon * sign(*g)).clamp(0.0, 1.0))
        .collect())
}

/// Loss gradient with respect to one input sample, taken through one fresh
/// dropout realization drawn from `seed` (the plain gradient when `p = 0`).
pub fn attack_gradient_through_dropout(model: &Model, x: &[f64], label: usize, p: f64, seed: u64) -> Result<Vec<f64>> {
    let draw = model.dropout_draw(p, seed)?;
    Ok(model.input_gradient(x, &[label], draw)?.1)
}

/// FGSM on a single sample against the deterministic model.
pub fn fgsm(model: &Model, x: &[f64], label: usize, epsilon: f64) -> Result<Vec<f64>> {
    if epsilon < 0.0 {
        return Err(Error::Config(format!("attack strength {epsilon} must be >= 0")));
    }
    let grad = attack_gradient_through_dropout(model, x, label, 0.0, 0)?;
    fgsm_step(x, &grad, epsilon)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Ascending attack strengths starting at 0.
    pub epsilons: Vec<f64>,
    /// Defense dropout probabilities.
    pub dropout_ps: Vec<f64>,
    pub seed: u64,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.first() != Some(&0.0) {
            return Err(Error::Config("epsilon grid must start at 0".into()));
        }
        if self.epsilons.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!(
                "epsilon grid {:?} must be strictly ascending",
                self.epsilons
            )));
        }
        if self.dropout_ps.is_empty() {
            return Err(Error::Config("dropout grid is empty".into()));
        }
        if let Some(p) = self.dropout_ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub p: f64,
    pub epsilon: f64,
    pub accuracy: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub points: Vec<RobustnessPoint>,
    pub seed: u64,
}

impl RobustnessCurve {
    pub fn accuracy(&self, p: f64, epsilon: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|pt| pt.p == p && pt.epsilon == epsilon)
            .map(|pt| pt.accuracy)
    }
}

/// For every `(p, ε)` and sample: attack through one dropout realization,
/// then classify the attacked input under an independent realization.
/// Streams are keyed by `(seed, p index, sample, ε index)`.
pub fn evaluate_robustness(model: &Model, dataset: &Dataset, config: &AttackConfig) -> Result<RobustnessCurve> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("cannot attack an empty dataset".into()));
    }
    for &p in &config.dropout_ps {
        model.dropout_draw(p, 0)?;
    }
    let classes = model.spec().n_classes;
    let mut points = Vec::new();
    for (pi, &p) in config.dropout_ps.iter().enumerate() {
        let correct = (0..dataset.len())
            .into_par_iter()
            .map(|i| {
                let x = dataset.sample(i);
                let label = dataset.labels()[i];
                let mut hits = vec![0usize; config.epsilons.len()];
                let mut fixed_grad = None;
                for (ei, &eps) in config.epsilons.iter().enumerate() {
                    let key = [pi as u64, i as u64, ei as u64];
                    let attacked = if eps == 0.0 {
                        x.to_vec()
                    } else {
                        let grad = if p == 0.0 {
                            if fixed_grad.is_none() {
                                fixed_grad = Some(attack_gradient_through_dropout(model, x, label, 0.0, 0)?);
                            }
                            fixed_grad.clone().unwrap_or_default()
                        } else {
                            let seed = rng::derive_seed(config.seed, &[ATTACK_STREAM, key[0], key[1], key[2]]);
                            attack_gradient_through_dropout(model, x, label, p, seed)?
                        };
                        fgsm_step(x, &grad, eps)?
                    };
                    let seed = rng::derive_seed(config.seed, &[DEFENSE_STREAM, key[0], key[1], key[2]]);
                    let logits = model.logits(&attacked, model.dropout_draw(p, seed)?)?;
                    if argmax_rows(&logits, classes)[0] == label {
                        hits[ei] = 1;
                    }
                }
                Ok(hits)
            })
            .collect::<Result<Vec<_>>>()?;
        for (ei, &eps) in config.epsilons.iter().enumerate() {
            let n = correct.len();
            let c: usize = correct.iter().map(|h| h[ei]).sum();
            points.push(RobustnessPoint {
                p,
                epsilon: eps,
                accuracy: c as f64 / n as f64,
                n_samples: n,
            });
        }
    }
    Ok(RobustnessCurve {
        points,
        seed: config.seed,
    })
}
