//! Network assembly, training and evaluation for the dense, convolutional,
//! weight-constrained and hybrid circuit models.

mod checkpoint;
mod model;
mod report;
mod spec;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use model::{DropoutDraw, Evaluation, Model};
pub use report::{variable_count_report, LayerVariables, VariableReport};
pub use spec::{Architecture, Combination, ConvSpec, ModelSpec};
pub use train::{parameter_checksum, train, EpochMetrics, TrainConfig, TrainReport};

#[cfg(test)]
mod tests;
