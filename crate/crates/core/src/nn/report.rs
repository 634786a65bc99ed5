use serde::{Deserialize, Serialize};

use super::spec::{LayerPlan, ModelSpec};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerVariables {
    pub layer: usize,
    pub kind: String,
    /// Trainable scalars as built.
    pub variables: usize,
    /// Trainable scalars of the same layer with free weights.
    pub unconstrained: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub layers: Vec<LayerVariables>,
    pub total: usize,
    pub unconstrained_total: usize,
    /// Weight-count ratio `fan_in·fan_out / (fan_out·N)` of the constrained
    /// layer, when there is one.
    pub layer_ratio: Option<f64>,
    pub network_ratio: f64,
}

/// Per-layer variable counts of `spec` and of its unconstrained twin.
pub fn variable_count_report(spec: &ModelSpec) -> Result<VariableReport> {
    let mut layers = Vec::new();
    let mut layer_ratio = None;
    for (i, lp) in spec.plan()?.iter().enumerate() {
        let (kind, variables, unconstrained) = match *lp {
            LayerPlan::Dense { fan_in, fan_out, .. } => {
                let n = fan_in * fan_out + fan_out;
                ("dense", n, n)
            }
            LayerPlan::TrigDense {
                fan_in,
                fan_out,
                combination,
                ..
            } => {
                let angles = fan_out * combination.n_angles;
                let weights = fan_in * fan_out;
                layer_ratio = Some(weights as f64 / angles as f64);
                ("trig_dense", angles + fan_out, weights + fan_out)
            }
            LayerPlan::Conv {
                c_in, c_out, kernel, ..
            } => {
                let n = c_out * c_in * kernel * kernel;
                ("conv", n, n)
            }
            LayerPlan::MaxPool { .. } => ("maxpool", 0, 0),
            LayerPlan::Quantum { n_qubits, .. } => {
                let n = 2 * n_qubits * spec.circuit_depth;
                ("circuit", n, n)
            }
        };
        layers.push(LayerVariables {
            layer: i,
            kind: kind.to_string(),
            variables,
            unconstrained,
        });
    }
    let total = layers.iter().map(|l| l.variables).sum();
    let unconstrained_total = layers.iter().map(|l| l.unconstrained).sum();
    Ok(VariableReport {
        layers,
        total,
        unconstrained_total,
        layer_ratio,
        network_ratio: unconstrained_total as f64 / total as f64,
    })
}
