use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::{Error, Result};

/// A trainable tensor and its pending gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub value: Tensor,
    #[serde(skip)]
    grad: Option<Vec<f64>>,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        Self { value, grad: None }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.value.len() {
            return Err(Error::Dimension(format!(
                "gradient of length {} for parameter of {}",
                grad.len(),
                self.value.len()
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state for a fixed list of parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[&Parameter]) -> Self {
        let first: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            config,
            step: 0,
            second: first.clone(),
            first,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update and zeroes the gradients.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.value.len() != self.first[i].len() {
                return Err(Error::State(format!(
                    "parameter {i} changed size since the optimizer was created"
                )));
            }
            if p.grad.is_none() {
                return Err(Error::State(format!("parameter {i} has no gradient")));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let grad = p.grad.as_mut().expect("checked above");
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (((x, g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.iter_mut())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * *g;
                *vi = beta2 * *vi + (1.0 - beta2) * *g * *g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
                *g = 0.0;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Parameter {
        Parameter::new(Tensor::scalar(v))
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar_param(0.7);
        let mut adam = Adam::new(AdamConfig::default(), &[&p]);
        p.set_grad(vec![0.0]).unwrap();
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value.data(), &[0.7]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_param(1.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &[&p]);
        p.set_grad(vec![1.0]).unwrap();
        adam.step(&mut [&mut p]).unwrap();
        // m̂ = v̂ = 1 after bias correction, so Δ = lr / (1 + eps).
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-15);
        assert_eq!(p.grad(), Some(&[0.0][..]));
    }

    #[test]
    fn missing_gradient_is_a_state_error() {
        let mut p = scalar_param(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &[&p]);
        assert!(matches!(adam.step(&mut [&mut p]), Err(Error::State(_))));
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let target = [0.3, -1.2, 2.5];
        let mut p = Parameter::new(Tensor::new(vec![3], vec![0.0; 3]).unwrap());
        let cfg = AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &[&p]);
        let loss = |x: &[f64]| -> f64 { x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum() };
        for _ in 0..500 {
            let g = p
                .value
                .data()
                .iter()
                .zip(&target)
                .map(|(a, b)| 2.0 * (a - b))
                .collect();
            p.set_grad(g).unwrap();
            adam.step(&mut [&mut p]).unwrap();
        }
        assert!(loss(p.value.data()) < 1e-6, "loss {}", loss(p.value.data()));
        assert_eq!(adam.steps(), 500);
    }
}
