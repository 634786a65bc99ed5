//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod graph;
pub mod kernels;
mod optim;
mod tensor;

pub use graph::{Activation, CustomOp, Graph, Var};
pub use optim::{Adam, AdamConfig, Parameter};
pub use tensor::{argmax_rows, softmax_rows, Tensor};
