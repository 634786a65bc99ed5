use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The trainable angles owned by one output neuron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleBank {
    pub theta: Vec<f64>,
    pub grad: Vec<f64>,
}

impl AngleBank {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Data("angle bank must be non-empty and finite".into()));
        }
        let grad = vec![0.0; theta.len()];
        Ok(Self { theta, grad })
    }

    /// Angles drawn uniformly from `(-π, π]`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let theta = (0..n).map(|_| sample_angle(rng)).collect();
        Self {
            theta,
            grad: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Uniform draw from `(-π, π]`.
pub fn sample_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    PI - rng.gen::<f64>() * 2.0 * PI
}

/// Trig factor for the angle at 0-based `position` inside a sorted subset:
/// even positions (1st, 3rd, ...) take `sin`, odd positions take `cos`.
#[inline]
pub fn factor(position: usize, theta: f64) -> f64 {
    if position.is_multiple_of(2) {
        theta.sin()
    } else {
        theta.cos()
    }
}

#[inline]
pub fn factor_derivative(position: usize, theta: f64) -> f64 {
    if position.is_multiple_of(2) {
        theta.cos()
    } else {
        -theta.sin()
    }
}

fn check_subset(bank: &AngleBank, subset: &[usize]) -> Result<()> {
    match subset.iter().find(|&&i| i >= bank.len()) {
        Some(i) => Err(Error::Index(format!(
            "angle {i} outside bank of {}",
            bank.len()
        ))),
        None => Ok(()),
    }
}

/// Product of alternating `sin`/`cos` factors over the subset's angles.
pub fn weight_value(bank: &AngleBank, subset: &[usize]) -> Result<f64> {
    check_subset(bank, subset)?;
    Ok(subset
        .iter()
        .enumerate()
        .map(|(pos, &a)| factor(pos, bank.theta[a]))
        .product())
}

/// `∂w/∂θ[angle_index]`; zero when the angle is not in the subset.
pub fn weight_gradient(bank: &AngleBank, subset: &[usize], angle_index: usize) -> Result<f64> {
    check_subset(bank, subset)?;
    let Some(target) = subset.iter().position(|&a| a == angle_index) else {
        return Ok(0.0);
    };
    Ok(subset
        .iter()
        .enumerate()
        .map(|(pos, &a)| {
            if pos == target {
                factor_derivative(pos, bank.theta[a])
            } else {
                factor(pos, bank.theta[a])
            }
        })
        .product())
}

/// Weight with the flagged factors replaced by one. `dropped` holds one flag
/// per subset position.
pub fn masked_weight_value(bank: &AngleBank, subset: &[usize], dropped: &[bool]) -> Result<f64> {
    check_subset(bank, subset)?;
    if dropped.len() != subset.len() {
        return Err(Error::Dimension(format!(
            "{} dropout flags for a subset of {}",
            dropped.len(),
            subset.len()
        )));
    }
    Ok(subset
        .iter()
        .zip(dropped)
        .enumerate()
        .map(|(pos, (&a, &d))| if d { 1.0 } else { factor(pos, bank.theta[a]) })
        .product())
}
