use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rayon::prelude::*;

use super::spec::{LayerPlan, ModelSpec};
use crate::autodiff::{argmax_rows, Activation, Graph, Parameter, Tensor, Var};
use crate::data::Dataset;
use crate::qsim::QuantumLayer;
use crate::rng;
use crate::trig_weights::{sample_angle, TrigWeightGenerator};
use crate::{Error, Result};

/// One inference-time dropout realization: probability and the seed its
/// masks derive from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutDraw {
    pub p: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub(crate) enum Layer {
    Dense {
        weight: usize,
        bias: usize,
        activation: Activation,
    },
    TrigDense {
        banks: usize,
        bias: usize,
        generator: TrigWeightGenerator,
        fan_out: usize,
        activation: Activation,
    },
    Conv {
        kernels: usize,
        activation: Activation,
    },
    MaxPool {
        window: usize,
    },
    Quantum {
        layer: QuantumLayer,
        params: usize,
    },
}

/// A built network: its spec, trainable parameters and layer wiring.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    params: Vec<Parameter>,
    names: Vec<String>,
    layers: Vec<Layer>,
}

fn uniform_tensor(shape: Vec<usize>, limit: f64, rng: &mut rng::Rng) -> Result<Tensor> {
    let n = shape.iter().product();
    let dist = Uniform::new_inclusive(-limit, limit);
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect())
}

impl Model {
    /// Builds the network with seeded initialization: Glorot-uniform dense
    /// and conv weights, zero biases, and angles uniform on `(-π, π]`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Model> {
        let plan = spec.plan()?;
        let mut model = Model {
            spec: spec.clone(),
            params: Vec::new(),
            names: Vec::new(),
            layers: Vec::new(),
        };
        for (i, lp) in plan.into_iter().enumerate() {
            let mut r = rng::stream(seed, &[0x1417, i as u64]);
            let layer = match lp {
                LayerPlan::Dense {
                    fan_in,
                    fan_out,
                    activation,
                } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let w = uniform_tensor(vec![fan_out, fan_in], limit, &mut r)?;
                    Layer::Dense {
                        weight: model.push(format!("layer{i}.weight"), w),
                        bias: model.push(format!("layer{i}.bias"), Tensor::zeros(vec![fan_out])?),
                        activation,
                    }
                }
                LayerPlan::TrigDense {
                    fan_in,
                    fan_out,
                    combination,
                    activation,
                } => {
                    let generator = TrigWeightGenerator::new(combination.n_angles, combination.r, fan_in)?;
                    let n = fan_out * combination.n_angles;
                    let angles = (0..n).map(|_| sample_angle(&mut r)).collect();
                    let banks = Tensor::new(vec![fan_out, combination.n_angles], angles)?;
                    Layer::TrigDense {
                        banks: model.push(format!("layer{i}.angles"), banks),
                        bias: model.push(format!("layer{i}.bias"), Tensor::zeros(vec![fan_out])?),
                        generator,
                        fan_out,
                        activation,
                    }
                }
                LayerPlan::Conv {
                    c_in,
                    c_out,
                    kernel,
                    activation,
                } => {
                    let area = kernel * kernel;
                    let limit = (6.0 / ((c_in + c_out) * area) as f64).sqrt();
                    let k = uniform_tensor(vec![c_out, c_in, kernel, kernel], limit, &mut r)?;
                    Layer::Conv {
                        kernels: model.push(format!("layer{i}.kernels"), k),
                        activation,
                    }
                }
                LayerPlan::MaxPool { window } => Layer::MaxPool { window },
                LayerPlan::Quantum {
                    n_qubits,
                    encoding,
                    in_dim,
                } => {
                    let layer = QuantumLayer::new(n_qubits, spec.circuit_depth, encoding, in_dim)?;
                    let n = layer.n_params();
                    let angles = (0..n).map(|_| sample_angle(&mut r)).collect();
                    let t = Tensor::new(vec![n], angles)?;
                    Layer::Quantum {
                        params: model.push(format!("layer{i}.circuit"), t),
                        layer,
                    }
                }
            };
            model.layers.push(layer);
        }
        Ok(model)
    }

    fn push(&mut self, name: String, value: Tensor) -> usize {
        self.names.push(name);
        self.params.push(Parameter::new(value));
        self.params.len() - 1
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    /// Total trainable scalars.
    pub fn n_variables(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub(crate) fn replace_params(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Format(format!(
                "{} parameter tensors for a model with {}",
                values.len(),
                self.params.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Format(format!(
                    "parameter shape {:?} where {:?} expected",
                    v.shape(),
                    p.value.shape()
                )));
            }
            p.value = v;
        }
        Ok(())
    }

    /// Checks `p` and turns it into a draw, `None` meaning deterministic.
    pub fn dropout_draw(&self, p: f64, seed: u64) -> Result<Option<DropoutDraw>> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1]")));
        }
        if p == 0.0 {
            return Ok(None);
        }
        if !self.spec.arch.supports_dropout() {
            return Err(Error::Config(format!(
                "{} has no droppable factors; dropout p must be 0",
                self.spec.arch
            )));
        }
        Ok(Some(DropoutDraw { p, seed }))
    }

    fn batch_of(&self, x: &[f64]) -> Result<usize> {
        let f = self.spec.input_len();
        if x.is_empty() || !x.len().is_multiple_of(f) {
            return Err(Error::Dimension(format!(
                "{} inputs do not form samples of {f}",
                x.len()
            )));
        }
        Ok(x.len() / f)
    }

    /// Registers parameters as graph leaves.
    pub(crate) fn leaves(&self, graph: &mut Graph, requires_grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| graph.leaf(p.value.clone(), requires_grad))
            .collect()
    }

    /// Records the forward pass of a flat `[batch × features]` input and
    /// returns the `[batch × classes]` logits.
    pub(crate) fn forward(&self, graph: &mut Graph, x: Var, params: &[Var], dropout: Option<DropoutDraw>) -> Result<Var> {
        let batch = graph.value(x).shape()[0];
        let mut h = if self.spec.arch.is_convolutional() {
            let [c, hh, ww] = self.spec.input_shape;
            graph.reshape(x, vec![batch, c, hh, ww])?
        } else {
            x
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let layer_seed = dropout.map(|d| (d.p, rng::derive_seed(d.seed, &[i as u64])));
            h = match layer {
                Layer::Dense {
                    weight,
                    bias,
                    activation,
                } => {
                    let h2 = self.flatten(graph, h)?;
                    let wt = graph.transpose(params[*weight])?;
                    let z = graph.matmul(h2, wt)?;
                    let z = graph.add_bias(z, params[*bias])?;
                    graph.activation(z, *activation)
                }
                Layer::TrigDense {
                    banks,
                    bias,
                    generator,
                    fan_out,
                    activation,
                } => {
                    let mask = match layer_seed {
                        Some((p, s)) => {
                            let mut r = rng::stream(s, &[]);
                            Some(Arc::new(generator.sample_mask(*fan_out, p, &mut r)?))
                        }
                        None => None,
                    };
                    let w = generator.apply(graph, params[*banks], mask)?;
                    let h2 = self.flatten(graph, h)?;
                    let wt = graph.transpose(w)?;
                    let z = graph.matmul(h2, wt)?;
                    let z = graph.add_bias(z, params[*bias])?;
                    graph.activation(z, *activation)
                }
                Layer::Conv { kernels, activation } => {
                    let z = graph.conv2d(h, params[*kernels], 1)?;
                    graph.activation(z, *activation)
                }
                Layer::MaxPool { window } => graph.maxpool2d(h, *window)?,
                Layer::Quantum { layer, params: slot } => {
                    let h2 = self.flatten(graph, h)?;
                    layer.apply(graph, h2, params[*slot], layer_seed)?
                }
            };
        }
        Ok(h)
    }

    fn flatten(&self, graph: &mut Graph, h: Var) -> Result<Var> {
        let shape = graph.value(h).shape();
        if shape.len() == 2 {
            return Ok(h);
        }
        let batch = shape[0];
        let rest = shape[1..].iter().product();
        graph.reshape(h, vec![batch, rest])
    }

    /// Row-major `[batch × classes]` logits.
    pub fn logits(&self, x: &[f64], dropout: Option<DropoutDraw>) -> Result<Vec<f64>> {
        let batch = self.batch_of(x)?;
        let mut g = Graph::new();
        let xv = g.leaf(Tensor::new(vec![batch, self.spec.input_len()], x.to_vec())?, false);
        let params = self.leaves(&mut g, false);
        let out = self.forward(&mut g, xv, &params, dropout)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Mean cross-entropy loss and its gradient with respect to the input.
    pub fn input_gradient(&self, x: &[f64], labels: &[usize], dropout: Option<DropoutDraw>) -> Result<(f64, Vec<f64>)> {
        let batch = self.batch_of(x)?;
        let mut g = Graph::new();
        let xv = g.leaf(Tensor::new(vec![batch, self.spec.input_len()], x.to_vec())?, true);
        let params = self.leaves(&mut g, false);
        let out = self.forward(&mut g, xv, &params, dropout)?;
        let loss = g.cross_entropy(out, labels)?;
        g.backward(loss)?;
        let value = g.value(loss).data()[0];
        let grad = g.take_grad(xv).unwrap_or_else(|| vec![0.0; x.len()]);
        Ok((value, grad))
    }

    /// Mean loss over the batch; stores parameter gradients.
    pub fn accumulate_gradients(&mut self, x: &[f64], labels: &[usize]) -> Result<f64> {
        let batch = self.batch_of(x)?;
        let mut g = Graph::new();
        let xv = g.leaf(Tensor::new(vec![batch, self.spec.input_len()], x.to_vec())?, false);
        let params = self.leaves(&mut g, true);
        let out = self.forward(&mut g, xv, &params, None)?;
        let loss = g.cross_entropy(out, labels)?;
        g.backward(loss)?;
        let value = g.value(loss).data()[0];
        for (p, v) in self.params.iter_mut().zip(&params) {
            let grad = g.take_grad(*v).unwrap_or_else(|| vec![0.0; p.value.len()]);
            p.set_grad(grad)?;
        }
        Ok(value)
    }

    /// Class indices. `dropout_p > 0` samples one fresh realization from
    /// `seed` for the whole batch.
    pub fn predict(&self, x: &[f64], dropout_p: f64, seed: u64) -> Result<Vec<usize>> {
        let draw = self.dropout_draw(dropout_p, seed)?;
        let logits = self.logits(x, draw)?;
        Ok(argmax_rows(&logits, self.spec.n_classes))
    }

    /// Mean loss and accuracy. Work is split into fixed chunks evaluated in
    /// parallel; with dropout each chunk draws its own realization from
    /// `(seed, chunk)`.
    pub fn evaluate(&self, dataset: &Dataset, dropout_p: f64, seed: u64) -> Result<Evaluation> {
        const CHUNK: usize = 256;
        if dataset.is_empty() {
            return Err(Error::Data("cannot evaluate on an empty dataset".into()));
        }
        if dataset.feature_len() != self.spec.input_len() {
            return Err(Error::Dimension(format!(
                "dataset samples have {} features, model expects {}",
                dataset.feature_len(),
                self.spec.input_len()
            )));
        }
        if let Some(&bad) = dataset.labels().iter().find(|&&l| l >= self.spec.n_classes) {
            return Err(Error::Data(format!(
                "label {bad} outside {} classes",
                self.spec.n_classes
            )));
        }
        self.dropout_draw(dropout_p, seed)?;
        let starts: Vec<usize> = (0..dataset.len()).step_by(CHUNK).collect();
        let parts = starts
            .par_iter()
            .enumerate()
            .map(|(ci, &start)| {
                let idx: Vec<usize> = (start..(start + CHUNK).min(dataset.len())).collect();
                let (x, y) = dataset.gather(&idx);
                let draw = self.dropout_draw(dropout_p, rng::derive_seed(seed, &[ci as u64]))?;
                let logits = self.logits(&x, draw)?;
                Ok(chunk_metrics(&logits, &y, self.spec.n_classes))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mut loss, mut correct) = (0.0, 0);
        for (l, c) in parts {
            loss += l;
            correct += c;
        }
        let n = dataset.len();
        Ok(Evaluation {
            loss: loss / n as f64,
            accuracy: correct as f64 / n as f64,
            n_samples: n,
        })
    }
}

/// Summed cross-entropy and number of correct predictions.
fn chunk_metrics(logits: &[f64], labels: &[usize], classes: usize) -> (f64, usize) {
    let mut loss = 0.0;
    for (row, &label) in logits.chunks(classes).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
    }
    let correct = argmax_rows(logits, classes)
        .iter()
        .zip(labels)
        .filter(|(a, b)| a == b)
        .count();
    (loss, correct)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub n_samples: usize,
}
