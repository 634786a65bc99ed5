//! Weight-constrained neural networks whose layer weights are generated from
//! small banks of angles through products of sines and cosines, together with
//! the quantum circuit models that motivate them, an expressibility analysis
//! of the resulting pre-activation distributions, and an FGSM attack harness
//! with an angle-dropout defense.

pub mod adversarial;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod expressibility;
pub mod nn;
pub mod qsim;
pub mod rng;
pub mod trig_weights;

pub use error::{Error, Result};
